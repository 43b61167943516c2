"""Multivariate Gaussian numerics.

All SPD work goes through a Cholesky factor; determinants and inverses of
covariance matrices are never formed directly.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import lapack, solve_triangular, cho_solve

from ..config import get_settings
from ..errors import DimensionMismatchError, NotPositiveDefiniteError, NumericalError

SYMMETRY_RTOL = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


class MonteCarloEstimate(NamedTuple):
    estimate: float
    std_error: float


def symmetrize(M, what: str = "matrix") -> np.ndarray:
    """Return (M + M^T)/2 after checking M is square and symmetric within tolerance."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError(f"{what} has non-finite entries")
    scale = np.max(np.abs(M))
    if scale > 0 and np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * scale:
        raise NumericalError(f"{what} is not symmetric (relative asymmetry above {SYMMETRY_RTOL})")
    return 0.5 * (M + M.T)


def cholesky(M, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises NotPositiveDefiniteError naming the first failing leading minor.
    """
    M = np.asarray(M, dtype=float)
    L, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info), what=what)
    if info < 0:
        raise NumericalError(f"dpotrf rejected argument {-info} for {what}")
    return L


def log_det_from_cholesky(L: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(L))))


def log_det(M, what: str = "matrix") -> float:
    """ln|M| for SPD M as the sum of log Cholesky pivots."""
    return log_det_from_cholesky(cholesky(symmetrize(M, what), what))


def spd_inverse(M, what: str = "matrix") -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor."""
    M = symmetrize(M, what)
    L = cholesky(M, what)
    inv = cho_solve((L, True), np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class Gaussian:
    """N(mean, covariance) with a cached lower Cholesky factor."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = symmetrize(self.covariance, "covariance")
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"mean of dimension {mean.shape} does not match covariance {cov.shape}"
            )
        if not np.all(np.isfinite(mean)):
            raise NumericalError("mean has non-finite entries")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol", cholesky(cov, "covariance"))

    @classmethod
    def from_precision(cls, mean, precision) -> "Gaussian":
        return cls(mean, spd_inverse(precision, "precision"))

    @property
    def k(self) -> int:
        return self.mean.size

    @cached_property
    def log_det_cov(self) -> float:
        return log_det_from_cholesky(self.chol)

    @cached_property
    def precision(self) -> np.ndarray:
        inv = cho_solve((self.chol, True), np.eye(self.k))
        return 0.5 * (inv + inv.T)

    def scale_cov(self, c: float) -> "Gaussian":
        if c <= 0:
            raise NumericalError(f"covariance scale must be positive, got {c}")
        return Gaussian(self.mean, c * self.covariance)

    def logpdf(self, x) -> np.ndarray:
        """Log density at rows of x (shape (n, k) or (k,))."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.k:
            raise DimensionMismatchError(f"points of dimension {x.shape[1]} for a {self.k}-d Gaussian")
        z = solve_triangular(self.chol, (x - self.mean).T, lower=True)
        out = -0.5 * (self.k * LOG_2PI + self.log_det_cov + np.sum(z * z, axis=0))
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.k))
        return self.mean + z @ self.chol.T


@dataclass(frozen=True)
class BoxUniform:
    """Uniform distribution on the axis-aligned box [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatchError(f"box bounds have shapes {lower.shape} and {upper.shape}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise NumericalError("box bounds must be finite")
        if np.any(upper <= lower):
            raise NumericalError("box has zero volume: every upper bound must exceed its lower bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def k(self) -> int:
        return self.lower.size

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.upper - self.lower)))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


def entropy(P: Gaussian) -> float:
    """Differential entropy (k/2) ln(2 pi e) + 1/2 ln|Sigma|."""
    return 0.5 * P.k * (LOG_2PI + 1.0) + 0.5 * P.log_det_cov


def _check_same_dim(P: Gaussian, Q: Gaussian):
    if P.k != Q.k:
        raise DimensionMismatchError(f"dimensions differ: {P.k} vs {Q.k}")


def kl_gauss(P: Gaussian, Q: Gaussian) -> float:
    """KL(P || Q) for multivariate Gaussians, in closed form."""
    _check_same_dim(P, Q)
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    A = solve_triangular(Q.chol, P.chol, lower=True)
    z = solve_triangular(Q.chol, Q.mean - P.mean, lower=True)
    trace_term = float(np.sum(A * A))
    maha = float(z @ z)
    return 0.5 * (trace_term + maha - P.k + Q.log_det_cov - P.log_det_cov)


def extended_kl_gauss_box(
    P: Gaussian,
    U: BoxUniform,
    samples: Optional[int] = None,
    seed: int = 0,
    chunk: Optional[int] = None,
) -> MonteCarloEstimate:
    """Monte-Carlo estimate of the extended KL of P against a box uniform.

    Estimates the integral over the box of p(x)[log p(x) + log vol(box)]
    with draws from P and an indicator restriction to the box. Draws are
    summed in blocks of ``chunk``; ``samples`` and ``chunk`` default to the
    settings of the calling process.
    """
    settings = get_settings()
    samples = settings.MC_SAMPLES if samples is None else int(samples)
    chunk = settings.MC_CHUNK if chunk is None else int(chunk)
    if chunk < 1:
        raise NumericalError(f"chunk must be positive, got {chunk}")
    if samples < 1000:
        raise NumericalError(f"extended KL needs at least 1000 samples, got {samples}")
    if U.k != P.k:
        raise DimensionMismatchError(f"box of dimension {U.k} for a {P.k}-d Gaussian")
    if not U.volume > 0:
        raise NumericalError("box has zero volume")

    rng = np.random.default_rng(seed)
    log_vol = U.log_volume
    total = 0.0
    total_sq = 0.0
    remaining = samples
    while remaining > 0:
        n = min(remaining, chunk)
        x = P.sample(n, rng)
        vals = np.where(U.contains(x), P.logpdf(x) + log_vol, 0.0)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        remaining -= n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / samples))


def tv_estimate_mc(P: Gaussian, Q: Gaussian, samples: int = 100_000, seed: int = 0) -> float:
    """Total variation distance estimated by importance sampling from (P + Q)/2.

    Half the draws come from each component; the weight |p - q| / (p + q)
    equals |tanh((log p - log q) / 2)|.
    """
    _check_same_dim(P, Q)
    if samples < 2:
        raise NumericalError("total variation estimate needs at least 2 samples")
    rng = np.random.default_rng(seed)
    n_p = samples // 2
    x = np.vstack([P.sample(n_p, rng), Q.sample(samples - n_p, rng)])
    w = np.abs(np.tanh(0.5 * (P.logpdf(x) - Q.logpdf(x))))
    return float(np.mean(w))
