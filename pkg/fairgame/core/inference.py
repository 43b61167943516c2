"""Coalition-wise conjugate inference and posterior-prior KL games."""
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import cho_solve

from ..config import get_settings
from ..errors import DimensionMismatchError, InsufficientDataError, RankDeficientError
from .fisher import FisherMatrix, joint_fisher
from .game import CharacteristicFunction, Coalition, members
from .gauss import (
    BoxUniform,
    Gaussian,
    cholesky,
    extended_kl_gauss_box,
    kl_gauss,
    log_det,
    spd_inverse,
    symmetrize,
)
from .players import DataSet, NoiseEstimate, PlayerModel, estimate_noise_sd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.gaussian

    @classmethod
    def standard(cls, k: int) -> "NormalPrior":
        return cls(np.zeros(k), np.eye(k))

    @cached_property
    def gaussian(self) -> Gaussian:
        return Gaussian(self.mean, self.cov)

    @property
    def k(self) -> int:
        return self.gaussian.k


@dataclass(frozen=True)
class BoxUniformPrior:
    box: BoxUniform

    @property
    def k(self) -> int:
        return self.box.k


Prior = Union[NormalPrior, BoxUniformPrior]


@dataclass(frozen=True)
class PlayerSample:
    """A player's model and data; ``noise_sd`` is the plug-in for unknown-noise models."""

    model: PlayerModel
    data: DataSet
    noise_sd: Optional[float] = None

    @property
    def m(self) -> int:
        return len(self.data)


class CoalitionValue(NamedTuple):
    value: float
    std_error: float


def _sufficient_statistics(coalition_data: Sequence[PlayerSample], k: int):
    gram = np.zeros((k, k))
    shift = np.zeros(k)
    for p in coalition_data:
        if p.model.k != k:
            raise DimensionMismatchError(f"player {p.model.name} has k={p.model.k}, expected {k}")
        if p.m == 0:
            continue
        g, b = p.model.information(p.data, p.noise_sd)
        gram += g
        shift += b
    return gram, shift


def conjugate_posterior(prior: NormalPrior, coalition_data: Sequence[PlayerSample]) -> Gaussian:
    """Precision = Sigma0^-1 + sum A^T S^-1 A; mean = precision^-1 (Sigma0^-1 theta0 + sum A^T S^-1 y)."""
    if sum(p.m for p in coalition_data) == 0:
        return prior.gaussian
    P0 = prior.gaussian.precision
    gram, shift = _sufficient_statistics(coalition_data, prior.k)
    precision = symmetrize(P0 + gram, "posterior precision")
    L = cholesky(precision, "posterior precision")
    mean = cho_solve((L, True), P0 @ prior.gaussian.mean + shift)
    cov = cho_solve((L, True), np.eye(prior.k))
    return Gaussian(mean, cov)


def joint_mle(coalition_data: Sequence[PlayerSample]) -> np.ndarray:
    """Weighted least squares over the coalition's combined data."""
    if not coalition_data:
        raise InsufficientDataError("joint MLE of an empty coalition")
    k = coalition_data[0].model.k
    gram, shift = _sufficient_statistics(coalition_data, k)
    rank = int(np.linalg.matrix_rank(gram))
    if rank < k:
        raise RankDeficientError(rank, k)
    L = cholesky(symmetrize(gram, "Gram matrix"), "Gram matrix")
    return cho_solve((L, True), shift)


def coalition_fisher(coalition_data: Sequence[PlayerSample]) -> Tuple[FisherMatrix, int]:
    """(I_S, m) with m the smallest positive count and I_S = sum_i (m_i / m) I_i.

    Then m I_S = sum_i m_i I_i, the exact conjugate precision scale.
    """
    counted = [p for p in coalition_data if p.m > 0]
    if not counted:
        raise InsufficientDataError("coalition has no data")
    m = min(p.m for p in counted)
    parts = [(p.model.analytic_fisher(p.noise_sd), p.m / m) for p in counted]
    return joint_fisher(parts), m


def bvm_approx(theta_hat, joint_fisher: FisherMatrix, m: int = 1) -> Gaussian:
    """N(theta_hat, (m I_S)^-1)."""
    if m < 1:
        raise InsufficientDataError(f"BvM approximation needs m >= 1, got {m}")
    return Gaussian(theta_hat, spd_inverse(m * joint_fisher.matrix, "Fisher information"))


def characteristic_value(
    S: Coalition,
    prior: Prior,
    players: Sequence[PlayerSample],
    seed=0,
    mc_samples: Optional[int] = None,
    mc_chunk: Optional[int] = None,
) -> CoalitionValue:
    """Posterior-prior KL divergence of coalition S.

    Normal priors use the exact conjugate posterior. Box priors use the
    extended KL of the BvM approximation, with its Monte-Carlo error.
    """
    if S == 0:
        return CoalitionValue(0.0, 0.0)
    coalition_data = [players[i] for i in members(S, len(players))]
    if isinstance(prior, NormalPrior):
        return CoalitionValue(kl_gauss(conjugate_posterior(prior, coalition_data), prior.gaussian), 0.0)
    fisher, m = coalition_fisher(coalition_data)
    approx = bvm_approx(joint_mle(coalition_data), fisher, m)
    est = extended_kl_gauss_box(approx, prior.box, mc_samples, seed, mc_chunk)
    return CoalitionValue(est.estimate, est.std_error)


def seed_words(seed: Union[int, Sequence[int]]) -> list:
    """Entropy words of an int seed or a sequence of ints."""
    return [int(s) for s in seed] if isinstance(seed, (tuple, list)) else [int(seed)]


def build_game(
    players: Sequence[PlayerSample],
    prior: Prior,
    seed: Union[int, Sequence[int]] = 0,
    mc_samples: Optional[int] = None,
    n_jobs: Optional[int] = None,
    mc_chunk: Optional[int] = None,
) -> CharacteristicFunction:
    """Evaluate all 2^n coalitions.

    Coalition S draws from SeedSequence([*seed, S]), and the Monte-Carlo
    budget is fixed here before any work is dispatched, so the result does
    not depend on scheduling or on the environment of worker processes.
    """
    n = len(players)
    if n < 1:
        raise InsufficientDataError("a game needs at least one player")
    settings = get_settings()
    n_jobs = settings.THREADS if n_jobs is None else n_jobs
    mc_samples = settings.MC_SAMPLES if mc_samples is None else int(mc_samples)
    mc_chunk = settings.MC_CHUNK if mc_chunk is None else int(mc_chunk)
    words = seed_words(seed)
    if isinstance(prior, NormalPrior):
        results = [characteristic_value(S, prior, players) for S in range(1, 1 << n)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(characteristic_value)(
                S, prior, players, np.random.SeedSequence([*words, S]), mc_samples, mc_chunk
            )
            for S in range(1, 1 << n)
        )
    values = np.zeros(1 << n)
    errors = np.zeros(1 << n)
    for S, r in enumerate(results, start=1):
        values[S], errors[S] = r
    return CharacteristicFunction(n, values, errors if isinstance(prior, BoxUniformPrior) else None)


def _log_det_of(I_S) -> float:
    matrix = getattr(I_S, "matrix", I_S)
    return log_det(matrix, "Fisher information")


def uniform_prior_asymptote(m: int, k: int, box: BoxUniform, I_S) -> float:
    """(k/2) log(m / 2 pi e) + log vol(box) + 1/2 log|I_S|."""
    return 0.5 * k * math.log(m / (2.0 * math.pi * math.e)) + box.log_volume + 0.5 * _log_det_of(I_S)


def xi(theta0, Sigma0, theta_star, k: Optional[int] = None) -> float:
    """1/2 (||theta0 - theta*||^2 in the Sigma0^-1 metric - k + log|Sigma0|)."""
    prior = Gaussian(theta0, Sigma0)
    k = prior.k if k is None else k
    d = np.asarray(theta_star, dtype=float) - prior.mean
    return 0.5 * (float(d @ prior.precision @ d) - k + prior.log_det_cov)


def normal_prior_asymptote(m: int, k: int, xi_value: float, I_S) -> float:
    """(k/2) log m + xi + 1/2 log|I_S|."""
    return 0.5 * k * math.log(m) + xi_value + 0.5 * _log_det_of(I_S)


def initial_noise_estimate(model: PlayerModel, data: DataSet) -> NoiseEstimate:
    """Residual noise estimate around the player's own least-squares fit."""
    theta_own = joint_mle([PlayerSample(model, data, noise_sd=1.0)])
    return estimate_noise_sd(model, data, theta_own)


def with_noise_estimates(players: Sequence[PlayerSample], theta_bar=None) -> list:
    """Fill the plug-in noise level of every unknown-noise player.

    Residuals are taken around theta_bar, or around each player's own fit
    when theta_bar is None.
    """
    out = []
    for p in players:
        if p.model.noise_known:
            out.append(p)
            continue
        if theta_bar is None:
            est = initial_noise_estimate(p.model, p.data)
        else:
            est = estimate_noise_sd(p.model, p.data, theta_bar)
        out.append(replace(p, noise_sd=est.sd))
    return out
