"""Cooperative games over at most 24 players.

Coalitions are integer bitmasks (bit i set means player i is a member) and a
characteristic function is a dense vector indexed by bitmask.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..config import get_settings
from ..errors import NotPositiveDefiniteError, NumericalError, TooManyPlayersError
from .gauss import cholesky, log_det_from_cholesky, symmetrize

MAX_PLAYERS = 24
MAX_EXACT_PLAYERS = 20

Coalition = int


def coalition(members: Iterable[int]) -> Coalition:
    mask = 0
    for i in members:
        mask |= 1 << int(i)
    return mask


def members(mask: Coalition, n: Optional[int] = None) -> tuple:
    n = mask.bit_length() if n is None else n
    return tuple(i for i in range(n) if (mask >> i) & 1)


@lru_cache(maxsize=None)
def coalition_sizes(n: int) -> np.ndarray:
    """|S| for every bitmask S < 2^n."""
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        sizes += (masks >> b) & 1
    sizes.setflags(write=False)
    return sizes


class SolutionConcept(str, Enum):
    SHAPLEY = "shapley"
    BANZHAF = "banzhaf"


@dataclass(frozen=True)
class CharacteristicFunction:
    """Game values v(S) for all 2^n coalitions; v(empty) is 0."""

    n: int
    values: np.ndarray
    std_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PLAYERS:
            raise TooManyPlayersError(f"games need 1..{MAX_PLAYERS} players, got {self.n}")
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (1 << self.n,):
            raise NumericalError(f"expected {1 << self.n} coalition values, got shape {values.shape}")
        if values[0] != 0.0:
            raise NumericalError(f"value of the empty coalition must be 0, got {values[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.std_errors is not None:
            errs = np.asarray(self.std_errors, dtype=float).copy()
            if errs.shape != values.shape:
                raise NumericalError("std_errors must match values")
            errs.setflags(write=False)
            object.__setattr__(self, "std_errors", errs)

    @classmethod
    def from_function(cls, n: int, fn: Callable[[Coalition], float]) -> "CharacteristicFunction":
        values = np.zeros(1 << n)
        for mask in range(1, 1 << n):
            values[mask] = fn(mask)
        return cls(n, values)

    def __call__(self, mask: Coalition) -> float:
        return float(self.values[mask])

    @property
    def grand(self) -> float:
        return float(self.values[-1])

    def __add__(self, other: "CharacteristicFunction") -> "CharacteristicFunction":
        if other.n != self.n:
            raise NumericalError(f"cannot add games of {self.n} and {other.n} players")
        return CharacteristicFunction(self.n, self.values + other.values)

    def scaled(self, a: float) -> "CharacteristicFunction":
        return CharacteristicFunction(self.n, a * self.values)

    def shifted(self, c: float) -> "CharacteristicFunction":
        """Add c to every nonempty coalition."""
        values = self.values + c
        values[0] = 0.0
        return CharacteristicFunction(self.n, values)

    def permuted(self, perm: Sequence[int]) -> "CharacteristicFunction":
        """Game in which player perm[i] plays the role player i had."""
        masks = np.arange(1 << self.n)
        target = np.zeros_like(masks)
        for i, p in enumerate(perm):
            target |= ((masks >> i) & 1) << p
        values = np.empty_like(self.values)
        values[target] = self.values
        return CharacteristicFunction(self.n, values)


@dataclass(frozen=True)
class Attribution:
    """Per-player values with provenance."""

    values: np.ndarray
    concept: SolutionConcept
    method: str = "exact"
    samples: Optional[int] = None
    seed: Optional[int] = None
    std_errors: Optional[np.ndarray] = None
    # largest per-coalition MC error of the valuation the attribution was computed from
    valuation_std_error: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])

    def __len__(self) -> int:
        return self.values.size


# Weight tables map a coalition size |S| (S not containing i) to w_S.
WeightTable = Callable[[int], np.ndarray]


@lru_cache(maxsize=None)
def shapley_weights(n: int) -> np.ndarray:
    """|S|!(n-|S|-1)!/n! for |S| = 0..n-1, exact rationals folded to float."""
    w = np.array(
        [float(Fraction(math.factorial(s) * math.factorial(n - s - 1), math.factorial(n))) for s in range(n)]
    )
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def banzhaf_weights(n: int) -> np.ndarray:
    w = np.full(n, float(Fraction(1, 2 ** (n - 1))))
    w.setflags(write=False)
    return w


WEIGHT_TABLES = {
    SolutionConcept.SHAPLEY: shapley_weights,
    SolutionConcept.BANZHAF: banzhaf_weights,
}


def semivalue(
    v: CharacteristicFunction,
    concept: SolutionConcept,
    weights: Optional[WeightTable] = None,
) -> Attribution:
    """phi_i = sum over S without i of w_|S| [v(S + i) - v(S)]."""
    n = v.n
    if n > MAX_EXACT_PLAYERS:
        raise TooManyPlayersError(
            f"exact enumeration supports at most {MAX_EXACT_PLAYERS} players, got {n}; use shapley_mc"
        )
    w = (weights or WEIGHT_TABLES[concept])(n)
    sizes = coalition_sizes(n)
    masks = np.arange(1 << n)
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        marginals = v.values[without | bit] - v.values[without]
        phi[i] = np.dot(w[sizes[without]], marginals)
    valuation_err = 0.0 if v.std_errors is None else float(np.max(v.std_errors))
    return Attribution(phi, concept, valuation_std_error=valuation_err)


def shapley_exact(v: CharacteristicFunction) -> Attribution:
    return semivalue(v, SolutionConcept.SHAPLEY)


def banzhaf(v: CharacteristicFunction) -> Attribution:
    return semivalue(v, SolutionConcept.BANZHAF)


def _permutation_batch(values: np.ndarray, n: int, count: int, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    perms = rng.permuted(np.tile(np.arange(n), (count, 1)), axis=1)
    after = np.cumsum(np.left_shift(1, perms), axis=1)
    before = after - np.left_shift(1, perms)
    marginals = values[after] - values[before]
    contrib = np.empty_like(marginals)
    np.put_along_axis(contrib, perms, marginals, axis=1)
    return contrib.sum(axis=0), (contrib * contrib).sum(axis=0)


def shapley_mc(
    v: CharacteristicFunction,
    permutations: int,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> Attribution:
    """Permutation-sampling Shapley estimate with per-player standard errors.

    Permutations are drawn in fixed-size batches, each from its own spawned
    seed, and batch sums are reduced in batch order, so the result does not
    depend on n_jobs.
    """
    if permutations < 1:
        raise NumericalError(f"need at least one permutation, got {permutations}")
    settings = get_settings()
    n_jobs = settings.THREADS if n_jobs is None else n_jobs
    batch = settings.SHAPLEY_MC_BATCH
    counts = [batch] * (permutations // batch)
    if permutations % batch:
        counts.append(permutations % batch)
    seeds = np.random.SeedSequence(seed).spawn(len(counts))

    parts = Parallel(n_jobs=n_jobs)(
        delayed(_permutation_batch)(v.values, v.n, c, s) for c, s in zip(counts, seeds)
    )
    total = np.zeros(v.n)
    total_sq = np.zeros(v.n)
    for s, sq in parts:
        total += s
        total_sq += sq
    mean = total / permutations
    if permutations > 1:
        var = np.maximum(total_sq / permutations - mean * mean, 0.0) * permutations / (permutations - 1)
        std_errors = np.sqrt(var / permutations)
    else:
        std_errors = np.full(v.n, np.nan)
    valuation_err = 0.0 if v.std_errors is None else float(np.max(v.std_errors))
    return Attribution(
        mean,
        SolutionConcept.SHAPLEY,
        method="monte_carlo",
        samples=permutations,
        seed=seed,
        std_errors=std_errors,
        valuation_std_error=valuation_err,
    )


def limiting_game(fishers: Sequence, weights: Optional[Sequence[float]] = None) -> CharacteristicFunction:
    """V(S) = 1/2 log|sum_{i in S} w_i I_i| and V(empty) = 0.

    ``fishers`` holds FisherMatrix objects or plain k x k arrays.
    """
    mats: List[np.ndarray] = [
        symmetrize(getattr(f, "matrix", f), "Fisher information") for f in fishers
    ]
    n = len(mats)
    if n == 0:
        raise NumericalError("limiting game needs at least one player")
    k = mats[0].shape[0]
    if any(m.shape != (k, k) for m in mats):
        raise NumericalError("Fisher matrices have mixed dimensions")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0):
        raise NumericalError("limiting game weights must be one non-negative number per player")

    values = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        total = np.zeros((k, k))
        for i in members(mask, n):
            total += w[i] * mats[i]
        try:
            values[mask] = 0.5 * log_det_from_cholesky(cholesky(total, "coalition Fisher information"))
        except NotPositiveDefiniteError as e:
            raise NotPositiveDefiniteError(
                e.minor, what="coalition Fisher information", coalition=members(mask, n)
            ) from e
    return CharacteristicFunction(n, values)


def delta_pair(
    v: CharacteristicFunction,
    i: int,
    j: int,
    concept: SolutionConcept = SolutionConcept.SHAPLEY,
) -> float:
    """phi(i, v) - phi(j, v)."""
    for p in (i, j):
        if not 0 <= p < v.n:
            raise IndexError(f"player {p} outside 0..{v.n - 1}")
    if i == j:
        raise ValueError("delta_pair needs two distinct players")
    phi = semivalue(v, SolutionConcept(concept))
    return float(phi.values[i] - phi.values[j])
