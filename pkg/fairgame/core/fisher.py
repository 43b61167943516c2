"""Fisher information matrices: sample estimates, joint sums, log-determinants."""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigvalsh

from ..config import get_settings
from ..errors import DimensionMismatchError, InsufficientDataError, NumericalError
from .gauss import cholesky, log_det_from_cholesky, symmetrize

PSD_SLACK = 1e-10


@dataclass(frozen=True)
class Provenance:
    """Where a Fisher matrix came from: analytic, sampled or joint."""

    kind: str
    m: Optional[int] = None
    theta_bar: Optional[tuple] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric PSD k x k matrix. SPD is only required where it is inverted or log-determined."""

    matrix: np.ndarray
    provenance: Provenance = field(default_factory=lambda: Provenance("analytic"))

    def __post_init__(self):
        M = symmetrize(self.matrix, "Fisher information")
        scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
        if M.size and eigvalsh(M)[0] < -PSD_SLACK * scale:
            raise NumericalError("Fisher information has a negative eigenvalue")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def sample_fisher(
    model,
    theta_bar,
    data,
    noise_sd: Optional[float] = None,
    seed: Optional[int] = None,
) -> FisherMatrix:
    """(1/m) sum_j s_j s_j^T with s_j the score of datum j at theta_bar.

    Outer products are accumulated over fixed-size chunks in data order.
    """
    m = len(data)
    if m == 0:
        raise InsufficientDataError(f"no data to estimate the Fisher information of player {model.name}")
    theta_bar = np.asarray(theta_bar, dtype=float)
    if not np.all(np.isfinite(theta_bar)):
        raise NumericalError("plug-in parameter has non-finite entries")
    chunk = get_settings().FISHER_CHUNK
    total = np.zeros((model.k, model.k))
    for start in range(0, m, chunk):
        s = model.scores(theta_bar, data.rows(start, start + chunk), noise_sd)
        total += s.T @ s
    return FisherMatrix(
        total / m,
        Provenance("sampled", m=m, theta_bar=tuple(float(t) for t in theta_bar), seed=seed),
    )


def joint_fisher(parts: Sequence[Tuple[FisherMatrix, float]]) -> FisherMatrix:
    """Weighted sum sum_i w_i I_i; weights carry count ratios or bundling factors."""
    if not parts:
        raise NumericalError("joint Fisher information needs at least one part")
    k = parts[0][0].k
    total = np.zeros((k, k))
    for F, w in parts:
        if F.k != k:
            raise DimensionMismatchError(f"Fisher matrices of dimension {F.k} and {k}")
        if w < 0:
            raise NumericalError(f"Fisher weights must be non-negative, got {w}")
        total += w * F.matrix
    return FisherMatrix(total, Provenance("joint"))


def log_det_fisher(F: FisherMatrix) -> float:
    """ln|F|; raises NotPositiveDefiniteError for singular F."""
    return log_det_from_cholesky(cholesky(F.matrix, "Fisher information"))


def gen_fisher_ratio(F_a: FisherMatrix, F_b: FisherMatrix, k: Optional[int] = None) -> float:
    """(|F_a| / |F_b|)^(1/k)."""
    if F_a.k != F_b.k:
        raise DimensionMismatchError(f"Fisher matrices of dimension {F_a.k} and {F_b.k}")
    k = F_a.k if k is None else k
    return math.exp((log_det_fisher(F_a) - log_det_fisher(F_b)) / k)

