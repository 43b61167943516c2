"""Pre-extracted regression feature tables, imputation and least-squares bundling.

Tables are numeric CSVs with feature columns ``x0..x{d-1}`` and a target
column ``y``; an empty cell is a missing feature value.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, lstsq, qr

from ..errors import ConfigError, InsufficientDataError, NumericalError, RankDeficientError
from ..core.gauss import spd_inverse

logger = logging.getLogger(__name__)

Sampling = Literal["iid", "leverage"]

MAX_BUNDLE_ATTEMPTS = 10


@dataclass(frozen=True)
class FeatureTable:
    """Rows of features (NaN marks a missing entry) with a finite target per row."""

    features: np.ndarray
    target: np.ndarray
    columns: Tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.target, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ConfigError(f"feature table is not rectangular: features {X.shape}, target {y.shape}")
        if np.any(np.isinf(X)):
            raise ConfigError("feature table has infinite entries")
        if not np.all(np.isfinite(y)):
            raise ConfigError("feature table target has missing or non-finite entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def mask(self) -> np.ndarray:
        """True where a feature value is missing."""
        return np.isnan(self.features)

    @property
    def complete(self) -> bool:
        return not self.mask.any()

    def take(self, rows: Sequence[int]) -> "FeatureTable":
        rows = np.asarray(rows, dtype=int)
        return FeatureTable(self.features[rows], self.target[rows], self.columns)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.columns))
        frame["y"] = self.target
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "FeatureTable":
        xs = [c for c in frame.columns if c != "y"]
        expected = [f"x{j}" for j in range(len(xs))]
        if "y" not in frame.columns or xs != expected:
            raise ConfigError(
                f"feature table needs columns {', '.join(expected) or 'x0'} and y, got {list(frame.columns)}"
            )
        try:
            features = frame[xs].to_numpy(dtype=float)
            target = frame["y"].to_numpy(dtype=float)
        except ValueError as e:
            raise ConfigError(f"feature table has non-numeric entries: {e}") from e
        return cls(features, target, tuple(xs))

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "FeatureTable":
        path = Path(path)
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigError(f"cannot read feature table {path}: {e}") from e
        logger.debug(f"read feature table {path} with {len(frame)} rows")
        return cls.from_frame(frame)


def impute_mean(table: FeatureTable) -> FeatureTable:
    """Replace missing entries by the column mean of the observed entries."""
    if table.complete:
        return table
    mask = table.mask
    empty = np.flatnonzero(mask.all(axis=0))
    if empty.size:
        names = ", ".join(table.columns[j] for j in empty)
        raise InsufficientDataError(f"cannot impute columns with no observed values: {names}")
    means = np.nanmean(table.features, axis=0)
    filled = np.where(mask, means, table.features)
    return FeatureTable(filled, table.target, table.columns)


def leverage_scores(X) -> np.ndarray:
    """Diagonal of the hat matrix X (X^T X)^-1 X^T, from a thin QR factor."""
    X = np.asarray(X, dtype=float)
    rank = int(np.linalg.matrix_rank(X))
    if rank < X.shape[1]:
        raise RankDeficientError(rank, X.shape[1], "design matrix")
    Q, _ = qr(X, mode="economic")
    return np.sum(Q * Q, axis=1)


def leverage_probabilities(X) -> np.ndarray:
    h = leverage_scores(X)
    return h / h.sum()


class Bundle(NamedTuple):
    """A least-squares solution and its estimated covariance s^2 (A^T A)^-1."""

    solution: np.ndarray
    covariance: np.ndarray


def row_probabilities(table: FeatureTable, sampling: Sampling) -> Optional[np.ndarray]:
    if sampling == "iid":
        return None
    if sampling == "leverage":
        return leverage_probabilities(table.features)
    raise ConfigError(f"unknown sampling method {sampling!r}")


def _lstsq(A, b, what: str) -> np.ndarray:
    try:
        return lstsq(A, b)[0]
    except (LinAlgError, ValueError) as e:
        raise NumericalError(f"least squares on the {what} failed: {e}") from e


def ls_bundle(
    table: FeatureTable,
    subset_size: int,
    sampling: Sampling = "iid",
    seed=None,
    probabilities: Optional[np.ndarray] = None,
) -> Bundle:
    """Solve least squares on subset_size rows drawn with replacement.

    Rows are drawn uniformly or with probability proportional to leverage.
    A rank-deficient draw is redrawn, at most 10 times in total.
    """
    if not table.complete:
        raise InsufficientDataError("bundling needs a table without missing values; impute first")
    d = table.d
    if subset_size < d:
        raise ConfigError(f"subset size {subset_size} is below the feature dimension {d}")
    rng = np.random.default_rng(seed)
    p = row_probabilities(table, sampling) if probabilities is None else probabilities

    for attempt in range(1, MAX_BUNDLE_ATTEMPTS + 1):
        rows = rng.choice(table.n, size=subset_size, replace=True, p=p)
        A = table.features[rows]
        b = table.target[rows]
        rank = int(np.linalg.matrix_rank(A))
        if rank == d:
            break
        logger.warning(f"bundle draw {attempt} has rank {rank} < {d}, redrawing")
    else:
        raise RankDeficientError(rank, d, f"bundle after {MAX_BUNDLE_ATTEMPTS} draws")

    solution = _lstsq(A, b, "bundle")
    residual = b - A @ solution
    s2 = float(residual @ residual) / max(subset_size - d, 1)
    covariance = s2 * spd_inverse(A.T @ A, "bundle Gram matrix")
    return Bundle(solution, covariance)


def least_squares(table: FeatureTable) -> np.ndarray:
    if not table.complete:
        raise InsufficientDataError("least squares needs a table without missing values; impute first")
    rank = int(np.linalg.matrix_rank(table.features))
    if rank < table.d:
        raise RankDeficientError(rank, table.d, "feature table")
    return _lstsq(table.features, table.target, "feature table")
