"""Observation families F_{i, theta}.

Every family here is Gaussian and linear in theta, so each exposes the
sufficient statistics (sum of A^T S^-1 A, sum of A^T S^-1 y) used by the
conjugate update next to the usual likelihood, score and Fisher information.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import (
    DimensionMismatchError,
    InsufficientDataError,
    MissingNoiseEstimateError,
    NumericalError,
)
from .fisher import FisherMatrix, Provenance
from .gauss import LOG_2PI, cholesky, log_det_from_cholesky, spd_inverse, symmetrize

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-8

Seed = Union[int, np.random.Generator, np.random.SeedSequence, None]


class DataPoint(NamedTuple):
    a: Optional[np.ndarray]
    y: np.ndarray


@dataclass(frozen=True)
class DataSet:
    """Ordered data of one player: observations y (m, d_y) and optional covariates a (m, d_a)."""

    player: str
    y: np.ndarray
    a: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise DimensionMismatchError(f"observations must be 2-d, got shape {y.shape}")
        object.__setattr__(self, "y", y)
        if self.a is not None:
            a = np.asarray(self.a, dtype=float)
            if a.ndim != 2 or a.shape[0] != y.shape[0]:
                raise DimensionMismatchError(
                    f"covariates of shape {a.shape} do not match {y.shape[0]} observations"
                )
            object.__setattr__(self, "a", a)

    def __len__(self) -> int:
        return self.y.shape[0]

    def __getitem__(self, j: int) -> DataPoint:
        return DataPoint(None if self.a is None else self.a[j], self.y[j])

    def __iter__(self) -> Iterator[DataPoint]:
        for j in range(len(self)):
            yield self[j]

    def concat(self, other: "DataSet") -> "DataSet":
        if (self.a is None) != (other.a is None) or self.y.shape[1] != other.y.shape[1]:
            raise DimensionMismatchError(f"cannot append data of player {other.player} to {self.player}")
        a = None if self.a is None else np.vstack([self.a, other.a])
        return DataSet(self.player, np.vstack([self.y, other.y]), a)

    def rows(self, start: int, stop: int) -> "DataSet":
        return DataSet(self.player, self.y[start:stop], None if self.a is None else self.a[start:stop])

    def to_frame(self) -> pd.DataFrame:
        cols = {}
        if self.a is not None:
            cols.update({f"a{c}": self.a[:, c] for c in range(self.a.shape[1])})
        cols.update({f"y{c}": self.y[:, c] for c in range(self.y.shape[1])})
        return pd.DataFrame(cols)

    @classmethod
    def from_frame(cls, player: str, frame: pd.DataFrame) -> "DataSet":
        a_cols = sorted((c for c in frame.columns if c.startswith("a")), key=lambda c: int(c[1:]))
        y_cols = sorted((c for c in frame.columns if c.startswith("y")), key=lambda c: int(c[1:]))
        if not y_cols:
            raise DimensionMismatchError(f"data of player {player} has no y columns")
        a = frame[a_cols].to_numpy(dtype=float) if a_cols else None
        return cls(player, frame[y_cols].to_numpy(dtype=float), a)


def _as_theta(theta, k: int) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (k,):
        raise DimensionMismatchError(f"parameter of shape {theta.shape} for a model with k={k}")
    if not np.all(np.isfinite(theta)):
        raise NumericalError("parameter has non-finite entries")
    return theta


class DesignLaw(Protocol):
    def draw(self, rng: np.random.Generator, m: int, k: int) -> np.ndarray: ...

    def second_moment(self, k: int) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianDesign:
    """Rows a ~ N(0, cov); cov defaults to the identity."""

    cov: Optional[np.ndarray] = None

    def draw(self, rng, m, k):
        z = rng.standard_normal((m, k))
        if self.cov is None:
            return z
        return z @ cholesky(symmetrize(self.cov, "design covariance"), "design covariance").T

    def second_moment(self, k):
        return np.eye(k) if self.cov is None else symmetrize(self.cov, "design covariance")


@dataclass(frozen=True)
class RademacherDesign:
    """Rows with independent +-1 entries; E[a a^T] = I."""

    def draw(self, rng, m, k):
        return rng.choice(np.array([-1.0, 1.0]), size=(m, k))

    def second_moment(self, k):
        return np.eye(k)


class PlayerModel(ABC):
    k: int
    name: str

    @property
    def noise_known(self) -> bool:
        return True

    @abstractmethod
    def sample(self, theta, m: int, seed: Seed = None) -> DataSet: ...

    @abstractmethod
    def log_likelihoods(self, theta, data: DataSet, noise_sd: Optional[float] = None) -> np.ndarray: ...

    @abstractmethod
    def scores(self, theta, data: DataSet, noise_sd: Optional[float] = None) -> np.ndarray: ...

    @abstractmethod
    def information(self, data: DataSet, noise_sd: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(sum A^T S^-1 A, sum A^T S^-1 y) over the data."""

    @abstractmethod
    def analytic_fisher(self, noise_sd: Optional[float] = None) -> FisherMatrix: ...

    def log_likelihood(self, theta, datum: DataPoint, noise_sd: Optional[float] = None) -> float:
        return float(self.log_likelihoods(theta, self._single(datum), noise_sd)[0])

    def score(self, theta, datum: DataPoint, noise_sd: Optional[float] = None) -> np.ndarray:
        return self.scores(theta, self._single(datum), noise_sd)[0]

    def empty(self) -> DataSet:
        return self.sample(np.zeros(self.k), 0, 0)

    def _single(self, datum: DataPoint) -> DataSet:
        a = None if datum.a is None else np.atleast_2d(datum.a)
        return DataSet(self.name, np.atleast_2d(datum.y), a)


@dataclass(frozen=True)
class DirectObservationModel(PlayerModel):
    """y ~ N(theta, noise_cov)."""

    k: int
    noise_cov: np.ndarray
    name: str = "direct"
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _precision: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cov = symmetrize(self.noise_cov, "noise covariance")
        if cov.shape != (self.k, self.k):
            raise DimensionMismatchError(f"noise covariance {cov.shape} for k={self.k}")
        object.__setattr__(self, "noise_cov", cov)
        object.__setattr__(self, "_chol", cholesky(cov, "noise covariance"))
        object.__setattr__(self, "_precision", spd_inverse(cov, "noise covariance"))

    @classmethod
    def isotropic(cls, k: int, variance: float, name: str = "direct") -> "DirectObservationModel":
        return cls(k, variance * np.eye(k), name)

    def sample(self, theta, m, seed=None):
        theta = _as_theta(theta, self.k)
        if m < 0:
            raise NumericalError(f"sample size must be non-negative, got {m}")
        rng = np.random.default_rng(seed)
        y = theta + rng.standard_normal((m, self.k)) @ self._chol.T
        return DataSet(self.name, y.reshape(m, self.k))

    def _check(self, data: DataSet):
        if data.y.shape[1] != self.k or data.a is not None:
            raise DimensionMismatchError(f"data of player {data.player} does not fit a {self.k}-d direct model")

    def log_likelihoods(self, theta, data, noise_sd=None):
        theta = _as_theta(theta, self.k)
        self._check(data)
        r = data.y - theta
        maha = np.einsum("ij,jk,ik->i", r, self._precision, r)
        return -0.5 * (self.k * LOG_2PI + log_det_from_cholesky(self._chol) + maha)

    def scores(self, theta, data, noise_sd=None):
        theta = _as_theta(theta, self.k)
        self._check(data)
        return (data.y - theta) @ self._precision

    def information(self, data, noise_sd=None):
        self._check(data)
        return len(data) * self._precision, self._precision @ data.y.sum(axis=0)

    def analytic_fisher(self, noise_sd=None):
        return FisherMatrix(self._precision, Provenance("analytic"))


@dataclass(frozen=True)
class LinearGaussianModel(PlayerModel):
    """y = a^T theta + eps with eps ~ N(0, noise_sd^2) and a fresh design row per datum.

    With ``noise_known=False`` the inference paths never read ``noise_sd``;
    they take a plug-in estimate instead.
    """

    k: int
    noise_sd: float
    noise_known: bool = True
    design: DesignLaw = field(default_factory=GaussianDesign)
    name: str = "linear"

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise NumericalError(f"noise standard deviation must be positive, got {self.noise_sd}")
        cholesky(symmetrize(self.design.second_moment(self.k), "design second moment"), "design second moment")

    def resolve_noise_sd(self, noise_sd: Optional[float]) -> float:
        if self.noise_known:
            return self.noise_sd
        if noise_sd is None:
            raise MissingNoiseEstimateError(
                f"player {self.name} has unknown noise; supply a plug-in estimate"
            )
        if not noise_sd > 0:
            raise NumericalError(f"plug-in noise estimate must be positive, got {noise_sd}")
        return float(noise_sd)

    def sample(self, theta, m, seed=None):
        theta = _as_theta(theta, self.k)
        if m < 0:
            raise NumericalError(f"sample size must be non-negative, got {m}")
        rng = np.random.default_rng(seed)
        a = np.asarray(self.design.draw(rng, m, self.k), dtype=float).reshape(m, self.k)
        y = a @ theta + self.noise_sd * rng.standard_normal(m)
        return DataSet(self.name, y[:, None], a)

    def _check(self, data: DataSet):
        if data.a is None or data.a.shape[1] != self.k or data.y.shape[1] != 1:
            raise DimensionMismatchError(f"data of player {data.player} does not fit a {self.k}-d linear model")

    def log_likelihoods(self, theta, data, noise_sd=None):
        theta = _as_theta(theta, self.k)
        self._check(data)
        sd = self.resolve_noise_sd(noise_sd)
        r = data.y[:, 0] - data.a @ theta
        return -0.5 * (LOG_2PI + 2.0 * math.log(sd)) - 0.5 * r * r / sd**2

    def scores(self, theta, data, noise_sd=None):
        theta = _as_theta(theta, self.k)
        self._check(data)
        sd = self.resolve_noise_sd(noise_sd)
        r = data.y[:, 0] - data.a @ theta
        return data.a * (r / sd**2)[:, None]

    def information(self, data, noise_sd=None):
        self._check(data)
        sd = self.resolve_noise_sd(noise_sd)
        return data.a.T @ data.a / sd**2, data.a.T @ data.y[:, 0] / sd**2

    def analytic_fisher(self, noise_sd=None):
        sd = self.resolve_noise_sd(noise_sd)
        return FisherMatrix(self.design.second_moment(self.k) / sd**2, Provenance("analytic"))


@dataclass(frozen=True)
class TwoModeMeanModel(PlayerModel):
    """Mean estimation for a two-mode mixture with known labels.

    theta stacks the two mode means (mu_0, mu_1). A datum is a one-hot label
    a (P(mode 0) = ratio) and an observation y ~ N(mu_label, noise_sd^2 I).
    """

    mode_dim: int
    noise_sd: float
    ratio: float
    name: str = "two_mode"

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise NumericalError(f"noise standard deviation must be positive, got {self.noise_sd}")
        if not 0.0 < self.ratio < 1.0:
            raise NumericalError(f"mode ratio must lie strictly between 0 and 1, got {self.ratio}")

    @property
    def k(self) -> int:
        return 2 * self.mode_dim

    def _means(self, theta, data):
        theta = _as_theta(theta, self.k)
        if data.a is None or data.a.shape[1] != 2 or data.y.shape[1] != self.mode_dim:
            raise DimensionMismatchError(f"data of player {data.player} does not fit a two-mode model")
        return data.a @ theta.reshape(2, self.mode_dim)

    def sample(self, theta, m, seed=None):
        theta = _as_theta(theta, self.k)
        if m < 0:
            raise NumericalError(f"sample size must be non-negative, got {m}")
        rng = np.random.default_rng(seed)
        labels = (rng.random(m) >= self.ratio).astype(int)
        a = np.eye(2)[labels].reshape(m, 2)
        y = a @ theta.reshape(2, self.mode_dim) + self.noise_sd * rng.standard_normal((m, self.mode_dim))
        return DataSet(self.name, y, a)

    def log_likelihoods(self, theta, data, noise_sd=None):
        r = data.y - self._means(theta, data)
        var = self.noise_sd**2
        return -0.5 * self.mode_dim * (LOG_2PI + math.log(var)) - 0.5 * np.sum(r * r, axis=1) / var

    def scores(self, theta, data, noise_sd=None):
        r = (data.y - self._means(theta, data)) / self.noise_sd**2
        return np.hstack([data.a[:, :1] * r, data.a[:, 1:] * r])

    def information(self, data, noise_sd=None):
        self._means(np.zeros(self.k), data)
        var = self.noise_sd**2
        counts = data.a.sum(axis=0)
        precision = np.kron(np.diag(counts), np.eye(self.mode_dim)) / var
        shift = (data.a.T @ data.y).reshape(-1) / var
        return precision, shift

    def analytic_fisher(self, noise_sd=None):
        weights = np.diag([self.ratio, 1.0 - self.ratio])
        return FisherMatrix(np.kron(weights, np.eye(self.mode_dim)) / self.noise_sd**2, Provenance("analytic"))


class NoiseEstimate(NamedTuple):
    sd: float
    floored: bool


def estimate_noise_sd(model: LinearGaussianModel, data: DataSet, theta_bar) -> NoiseEstimate:
    """Residual-variance MLE sigma^2 = mean (y_j - a_j^T theta_bar)^2, floored at 1e-8."""
    if not isinstance(model, LinearGaussianModel) or model.noise_known:
        raise NumericalError(f"player {model.name} does not have an unknown noise level")
    if len(data) < 2:
        raise InsufficientDataError(f"noise estimate of player {model.name} needs at least 2 data points")
    theta_bar = _as_theta(theta_bar, model.k)
    model._check(data)
    r = data.y[:, 0] - data.a @ theta_bar
    sd = math.sqrt(float(np.mean(r * r)))
    if sd < NOISE_FLOOR:
        logger.warning(f"noise estimate of player {model.name} hit the floor {NOISE_FLOOR}")
        return NoiseEstimate(NOISE_FLOOR, True)
    return NoiseEstimate(sd, False)
