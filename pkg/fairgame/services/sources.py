"""Data sources that serve a player's observations on request."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import ConfigError, SourceExhaustedError
from ..core.inference import seed_words
from ..core.players import DataSet, DirectObservationModel, PlayerModel
from .features import (
    FeatureTable,
    Sampling,
    row_probabilities,
    impute_mean,
    least_squares,
    ls_bundle,
)

logger = logging.getLogger(__name__)


class DataSource(Protocol):
    player: str

    def draw(self, count: int, rng: np.random.Generator, iteration: Optional[int] = None) -> DataSet: ...


@dataclass(frozen=True)
class SyntheticSource:
    """Unbounded i.i.d. draws from a player model at a fixed parameter."""

    model: PlayerModel
    center: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).copy()
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def player(self) -> str:
        return self.model.name

    def draw(self, count, rng, iteration=None):
        return self.model.sample(self.center, count, rng)


@dataclass(frozen=True)
class BundleSource:
    """Each datum is the least-squares solution of one bundle of table rows."""

    player: str
    table: FeatureTable
    subset_size: int
    sampling: Sampling = "iid"
    probabilities: Optional[np.ndarray] = None

    def draw(self, count, rng, iteration=None):
        solutions = np.empty((count, self.table.d))
        for j in range(count):
            solutions[j] = ls_bundle(self.table, self.subset_size, self.sampling, rng, self.probabilities).solution
        return DataSet(self.player, solutions)


class ReplaySource:
    """Serves a recorded data set in order and fails once it runs out."""

    def __init__(self, data: DataSet):
        self.data = data
        self.player = data.player
        self.position = 0

    @classmethod
    def from_csv(cls, path: Union[str, Path], player: str) -> "ReplaySource":
        path = Path(path)
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigError(f"cannot read recorded data {path}: {e}") from e
        return cls(DataSet.from_frame(player, frame))

    @property
    def remaining(self) -> int:
        return len(self.data) - self.position

    def draw(self, count, rng=None, iteration=None):
        if count > self.remaining:
            raise SourceExhaustedError(self.player, count, self.remaining, iteration)
        start = self.position
        self.position += count
        return self.data.rows(start, self.position)


def bundle_player(
    table: FeatureTable,
    data_size: int,
    subset_size: int,
    sampling: Sampling = "iid",
    seed: Union[int, Sequence[int]] = 0,
    calibration: int = 50,
    name: str = "bundle",
):
    """Direct-observation player whose data points are least-squares bundles.

    The player keeps data_size random rows of the (imputed) table. The
    noise covariance of its model is the mean bundle covariance over
    ``calibration`` independently drawn bundles.
    """
    table = impute_mean(table)
    if not 1 <= data_size <= table.n:
        raise ConfigError(f"data_size must be in 1..{table.n}, got {data_size}")
    if calibration < 1:
        raise ConfigError(f"calibration needs at least one bundle, got {calibration}")
    rows_seed, calibration_seed = np.random.SeedSequence([*seed_words(seed), 1]).spawn(2)
    rows = np.random.default_rng(rows_seed).choice(table.n, size=data_size, replace=False)
    own = table.take(np.sort(rows))
    p = row_probabilities(own, sampling)

    rng = np.random.default_rng(calibration_seed)
    covs = [ls_bundle(own, subset_size, sampling, rng, p).covariance for _ in range(calibration)]
    model = DirectObservationModel(table.d, np.mean(covs, axis=0), name)
    logger.debug(f"bundle player {name}: {data_size} rows, subset size {subset_size}, {sampling} sampling")
    return model, BundleSource(name, own, subset_size, sampling, p)


def noisy_observer_from_table(
    table: FeatureTable,
    ratio: float,
    nan_fraction: float,
    sigma: float,
    seed: Union[int, Sequence[int]] = 0,
    name: str = "noisy",
):
    """Direct-observation player drawing N(theta_hat, sigma^2 I).

    theta_hat is the least-squares fit on a random ``ratio`` share of the
    rows after masking ``nan_fraction`` of their entries and imputing. The
    source is centred at theta_hat, not at the true parameter.
    """
    if not 0 < ratio <= 1:
        raise ConfigError(f"ratio must be in (0, 1], got {ratio}")
    if not 0 <= nan_fraction < 1:
        raise ConfigError(f"nan_fraction must be in [0, 1), got {nan_fraction}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(np.random.SeedSequence([*seed_words(seed), 2]))
    count = min(table.n, max(table.d, int(np.floor(ratio * table.n + 0.5))))
    rows = np.sort(rng.choice(table.n, size=count, replace=False))
    sub = table.take(rows)

    X = np.array(sub.features)
    hidden = int(np.floor(nan_fraction * X.size))
    if hidden:
        X.flat[rng.choice(X.size, size=hidden, replace=False)] = np.nan
    center = least_squares(impute_mean(FeatureTable(X, sub.target, sub.columns)))

    model = DirectObservationModel.isotropic(table.d, sigma**2, name)
    return model, SyntheticSource(model, center)
