"""In-memory result records of fair-share runs."""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

Pair = Tuple[int, int]


@dataclass(frozen=True)
class RunRecord:
    """Snapshot after one fair-share iteration.

    ``counts`` are cumulative counts after this iteration's collection,
    ``logdet_fisher`` are the log-determinants of the Fisher estimates that
    set this iteration's rates (None during warm-up) and ``deltas`` maps each
    pair i < j to its relative Shapley gap (None when undefined).
    """

    iteration: int
    players: Tuple[str, ...]
    counts: Tuple[int, ...]
    shapley: Tuple[float, ...]
    logdet_fisher: Tuple[Optional[float], ...]
    theta_bar: Tuple[float, ...]
    deltas: Dict[Pair, Optional[float]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.players)

    def delta(self, i: int = 0, j: int = 1) -> Optional[float]:
        return self.deltas[(min(i, j), max(i, j))]


@dataclass(frozen=True)
class DeltaStats:
    """Post-burn-in statistics of a delta series.

    ``iter`` is the 1-based post-burn-in iteration at which delta first stays
    below the threshold for a full window, or None when that never happens.
    """

    pair: Tuple[str, str]
    lowest: float
    average: float
    stdev: float
    iter: Optional[int]
