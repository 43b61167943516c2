"""Online fair data sharing.

Each iteration estimates a common parameter from everyone's cumulative
data, estimates every player's Fisher information at it, and asks each
player for a number of new points chosen so that cumulative counts move
toward the inverse ratio of the Fisher determinant roots. The players'
Shapley values are recorded after every collection.
"""
import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import get_settings
from ..errors import ConfigError, InsufficientDataError, NotPositiveDefiniteError, SingularFisherError
from ..core.fisher import FisherMatrix, log_det_fisher, sample_fisher
from ..core.game import shapley_exact
from ..core.inference import (
    NormalPrior,
    PlayerSample,
    Prior,
    build_game,
    conjugate_posterior,
    joint_mle,
    with_noise_estimates,
)
from ..core.players import DataSet, PlayerModel
from ..models.records import DeltaStats, RunRecord
from .sources import DataSource

logger = logging.getLogger(__name__)

ParameterEstimator = Callable[[Prior, Sequence[PlayerSample]], np.ndarray]


def posterior_mean_estimator(prior: Prior, samples: Sequence[PlayerSample]) -> np.ndarray:
    """Joint conjugate posterior mean; the joint MLE under a box prior."""
    if isinstance(prior, NormalPrior):
        return conjugate_posterior(prior, samples).mean
    return joint_mle(samples)


def mle_estimator(prior: Prior, samples: Sequence[PlayerSample]) -> np.ndarray:
    return joint_mle(samples)


ESTIMATORS: Dict[str, ParameterEstimator] = {
    "posterior_mean": posterior_mean_estimator,
    "mle": mle_estimator,
}


@dataclass(frozen=True)
class FairShareConfig:
    """Settings of one fair-share run.

    Initial counts must reach k + 4 unless ``allow_warm_up`` is set, in
    which case every player collects ``base_rate`` points per iteration
    until all counts reach k + 4.
    """

    players: Tuple[str, ...]
    prior: Prior
    initial_counts: Tuple[int, ...]
    base_rate: int
    min_rate: int = 1
    max_rate: int = 10_000
    iterations: int = 30
    burn_in: int = 5
    delta_threshold: float = 0.1
    consecutive_window: int = 5
    seed: int = 0
    allow_warm_up: bool = False
    mc_samples: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        object.__setattr__(self, "initial_counts", tuple(int(m) for m in self.initial_counts))
        if len(self.players) < 2:
            raise ConfigError("fair sharing needs at least two players")
        if len(set(self.players)) != len(self.players):
            raise ConfigError(f"player names must be unique, got {self.players}")
        if len(self.initial_counts) != len(self.players):
            raise ConfigError(
                f"{len(self.initial_counts)} initial counts for {len(self.players)} players"
            )
        floor = 1 if self.allow_warm_up else self.warm_up_count
        low = [p for p, m in zip(self.players, self.initial_counts) if m < floor]
        if low:
            raise ConfigError(f"initial counts of {', '.join(low)} are below {floor}")
        if not 1 <= self.min_rate <= self.base_rate <= self.max_rate:
            raise ConfigError(
                f"rates must satisfy 1 <= min_rate <= base_rate <= max_rate, "
                f"got {self.min_rate}, {self.base_rate}, {self.max_rate}"
            )
        if self.iterations < 1:
            raise ConfigError(f"iterations must be at least 1, got {self.iterations}")
        if self.burn_in < 0 or self.consecutive_window < 1:
            raise ConfigError("burn_in must be >= 0 and consecutive_window >= 1")
        if self.delta_threshold <= 0:
            raise ConfigError(f"delta_threshold must be positive, got {self.delta_threshold}")
        if self.mc_samples is not None and self.mc_samples < 1000:
            raise ConfigError(f"mc_samples must be at least 1000, got {self.mc_samples}")

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def warm_up_count(self) -> int:
        return self.prior.k + 4


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _clamp(r: float, config: FairShareConfig) -> int:
    return min(max(_round_half_up(r), config.min_rate), config.max_rate)


def _log_dets(fishers: Sequence[FisherMatrix], config: FairShareConfig, iteration=None) -> List[float]:
    out = []
    for name, F in zip(config.players, fishers):
        try:
            out.append(log_det_fisher(F))
        except NotPositiveDefiniteError as e:
            raise SingularFisherError(
                name, iteration, "raise its initial count or enable warm-up"
            ) from e
    return out


def rate_step(
    counts: Sequence[int],
    fishers: Sequence[FisherMatrix],
    config: FairShareConfig,
    iteration: Optional[int] = None,
) -> List[int]:
    """Number of new points each player collects this iteration.

    The player with the largest |I_i| collects base_rate. With two players
    the other count solves (m_1 + r_1) |I_1|^(1/k) = (m_2 + r_2) |I_2|^(1/k)
    exactly; with more players r_i = base_rate (|I_max| / |I_i|)^(1/k).
    Rates are rounded half up, then clamped to [min_rate, max_rate].
    """
    n = len(counts)
    if len(fishers) != n or n != config.n:
        raise ConfigError(f"{len(fishers)} Fisher matrices and {n} counts for {config.n} players")
    k = fishers[0].k
    log_dets = _log_dets(fishers, config, iteration)
    star = int(np.argmax(log_dets))
    ratio = [math.exp((log_dets[star] - ld) / k) for ld in log_dets]

    if n == 2:
        other = 1 - star
        r_star = float(config.base_rate)
        r_other = (counts[star] + r_star) * ratio[other] - counts[other]
        if r_other < config.min_rate:
            r_other = float(config.min_rate)
            r_star = (counts[other] + r_other) / ratio[other] - counts[star]
        raw = [0.0, 0.0]
        raw[star], raw[other] = r_star, r_other
    else:
        raw = [config.base_rate * q for q in ratio]
    return [_clamp(r, config) for r in raw]


def delta_stat(phi, i: int = 0, j: int = 1) -> Optional[float]:
    """|(phi_i - phi_j) / (phi_i + phi_j)|, or None when the denominator is 0."""
    values = getattr(phi, "values", phi)
    a, b = float(values[i]), float(values[j])
    total = a + b
    if total == 0.0 or not math.isfinite(total):
        return None
    return abs((a - b) / total)


def iter_metric(
    series: Sequence[Optional[float]],
    threshold: float = 0.1,
    window: int = 5,
    burn_in: int = 5,
    pair: Tuple[str, str] = ("0", "1"),
) -> DeltaStats:
    """Statistics of a delta series after burn-in.

    ``iter`` is 1-based within the post-burn-in part of the series. Undefined
    deltas (None) are left out of the statistics and break a window.
    """
    if len(series) < burn_in + window:
        raise InsufficientDataError(
            f"delta series of length {len(series)} is shorter than burn-in {burn_in} plus window {window}"
        )
    post = list(series[burn_in:])
    defined = np.array([d for d in post if d is not None], dtype=float)
    if defined.size:
        lowest = float(defined.min())
        average = float(defined.mean())
        stdev = float(defined.std(ddof=1)) if defined.size > 1 else float("nan")
    else:
        lowest = average = stdev = float("nan")

    below = [d is not None and d < threshold for d in post]
    reached = next(
        (t + 1 for t in range(len(post) - window + 1) if all(below[t:t + window])),
        None,
    )
    return DeltaStats(pair, lowest, average, stdev, reached)


def summarize_deltas(records: Sequence[RunRecord], config: FairShareConfig) -> List[DeltaStats]:
    """One DeltaStats per player pair, in pair order."""
    out = []
    for i, j in combinations(range(config.n), 2):
        series = [r.deltas[(i, j)] for r in records]
        out.append(
            iter_metric(
                series,
                config.delta_threshold,
                config.consecutive_window,
                config.burn_in,
                (config.players[i], config.players[j]),
            )
        )
    return out


class FairShareRunner:
    """Drives the estimate / rate / collect / value loop for a fixed set of players."""

    def __init__(
        self,
        config: FairShareConfig,
        models: Sequence[PlayerModel],
        sources: Sequence[DataSource],
        estimator: ParameterEstimator = posterior_mean_estimator,
        fishers: Optional[Sequence[FisherMatrix]] = None,
        n_jobs: Optional[int] = None,
    ):
        if not len(models) == len(sources) == config.n:
            raise ConfigError(f"{len(models)} models and {len(sources)} sources for {config.n} players")
        if any(m.k != config.prior.k for m in models):
            raise ConfigError(f"every player model must have k = {config.prior.k}")
        if fishers is not None and len(fishers) != config.n:
            raise ConfigError(f"{len(fishers)} injected Fisher matrices for {config.n} players")
        self.config = config
        self.models = list(models)
        self.sources = list(sources)
        self.estimator = estimator
        self.fishers = None if fishers is None else list(fishers)
        self.n_jobs = n_jobs
        settings = get_settings()
        self.mc_samples = settings.MC_SAMPLES if config.mc_samples is None else config.mc_samples
        self.mc_chunk = settings.MC_CHUNK
        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(config.n)]

    def _draw(self, i: int, count: int, iteration: int) -> DataSet:
        data = self.sources[i].draw(count, self.rngs[i], iteration)
        if len(data) != count:
            raise InsufficientDataError(
                f"source of {self.config.players[i]} served {len(data)} of {count} points"
            )
        return data

    def _samples(self, data: Sequence[DataSet], theta_bar) -> List[PlayerSample]:
        return with_noise_estimates([PlayerSample(m, d) for m, d in zip(self.models, data)], theta_bar)

    def _estimate_fishers(self, samples: Sequence[PlayerSample], theta_bar) -> List[FisherMatrix]:
        if self.fishers is not None:
            return self.fishers
        return [
            sample_fisher(p.model, theta_bar, p.data, p.noise_sd, seed=self.config.seed)
            for p in samples
        ]

    def run(self) -> List[RunRecord]:
        config = self.config
        data = [self._draw(i, m, 0) for i, m in enumerate(config.initial_counts)]
        theta_bar = None
        records = []

        for t in range(1, config.iterations + 1):
            counts = [len(d) for d in data]
            samples = self._samples(data, theta_bar)
            theta_bar = np.asarray(self.estimator(config.prior, samples), dtype=float)

            if self.fishers is None and min(counts) < config.warm_up_count:
                logger.warning(f"iteration {t}: warm-up, counts {counts} below {config.warm_up_count}")
                rates = [config.base_rate] * config.n
                log_dets: List[Optional[float]] = [None] * config.n
            else:
                fishers = self._estimate_fishers(samples, theta_bar)
                log_dets = _log_dets(fishers, config, t)
                rates = rate_step(counts, fishers, config, t)

            data = [d.concat(self._draw(i, r, t)) for i, (d, r) in enumerate(zip(data, rates))]
            game = build_game(
                self._samples(data, theta_bar),
                config.prior,
                seed=(config.seed, t),
                mc_samples=self.mc_samples,
                n_jobs=self.n_jobs,
                mc_chunk=self.mc_chunk,
            )
            phi = shapley_exact(game)
            deltas = {(i, j): delta_stat(phi, i, j) for i, j in combinations(range(config.n), 2)}

            record = RunRecord(
                iteration=t,
                players=config.players,
                counts=tuple(len(d) for d in data),
                shapley=tuple(float(v) for v in phi.values),
                logdet_fisher=tuple(log_dets),
                theta_bar=tuple(float(v) for v in theta_bar),
                deltas=deltas,
            )
            logger.debug(f"iteration {t}: rates {rates}, counts {record.counts}, deltas {deltas}")
            records.append(record)
        return records


def run(
    config: FairShareConfig,
    models: Sequence[PlayerModel],
    data_sources: Sequence[DataSource],
    estimator: ParameterEstimator = posterior_mean_estimator,
    fishers: Optional[Sequence[FisherMatrix]] = None,
    n_jobs: Optional[int] = None,
) -> List[RunRecord]:
    """Run the fair-share loop; ``fishers`` replaces the per-iteration estimates."""
    return FairShareRunner(config, models, data_sources, estimator, fishers, n_jobs).run()
