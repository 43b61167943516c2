"""Pydantic schemas for experiment configuration files."""
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StringConstraints,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from ..errors import ConfigError

DEFAULT_THETA_STAR = (1.0, -1.0, 0.5, 2.0)
DEFAULT_M_GRID = tuple(2**p for p in range(4, 13))

PlayerName = Annotated[str, StringConstraints(pattern=r"^[A-Za-z0-9_]+$")]
PositiveFloat = Annotated[float, Field(gt=0)]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _resolve(path: Path, info: ValidationInfo) -> Path:
    base = (info.context or {}).get("base_dir")
    if base is None or path.is_absolute():
        return path
    return Path(base) / path


# ============ Player Schemas ============

class DirectPlayerSpec(StrictModel):
    """y ~ N(theta, noise_var I), or N(theta, noise_cov)."""

    kind: Literal["direct"] = "direct"
    name: PlayerName
    noise_var: Optional[PositiveFloat] = None
    noise_cov: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _one_noise(self):
        if (self.noise_var is None) == (self.noise_cov is None):
            raise ValueError("give exactly one of noise_var and noise_cov")
        return self


class LinearPlayerSpec(StrictModel):
    """y = a^T theta + noise with random covariates a."""

    kind: Literal["linear"] = "linear"
    name: PlayerName
    noise_sd: PositiveFloat
    noise_known: bool = True
    design: Literal["gaussian", "rademacher"] = "gaussian"


class TwoModePlayerSpec(StrictModel):
    kind: Literal["two_mode"] = "two_mode"
    name: PlayerName
    noise_sd: PositiveFloat
    ratio: Annotated[float, Field(gt=0, lt=1)]


class TableBundlePlayerSpec(StrictModel):
    """Least-squares bundles of rows from a feature table."""

    kind: Literal["table_bundle"] = "table_bundle"
    name: PlayerName
    table: Path
    data_size: Annotated[int, Field(ge=1)]
    subset_size: Annotated[int, Field(ge=1)]
    sampling: Literal["iid", "leverage"] = "iid"
    calibration: Annotated[int, Field(ge=1)] = 50

    @field_validator("table")
    @classmethod
    def _table_path(cls, v: Path, info: ValidationInfo) -> Path:
        return _resolve(v, info)


class TableNoisyPlayerSpec(StrictModel):
    """Noisy draws around a least-squares fit on a degraded share of a table."""

    kind: Literal["table_noisy"] = "table_noisy"
    name: PlayerName
    table: Path
    ratio: Annotated[float, Field(gt=0, le=1)]
    nan_fraction: Annotated[float, Field(ge=0, lt=1)] = 0.0
    sigma: PositiveFloat = 1.0

    @field_validator("table")
    @classmethod
    def _table_path(cls, v: Path, info: ValidationInfo) -> Path:
        return _resolve(v, info)


ReplayModelSpec = Annotated[Union[DirectPlayerSpec, LinearPlayerSpec], Field(discriminator="kind")]


class ReplayPlayerSpec(StrictModel):
    """Recorded data served in order; ``model`` describes how it was generated."""

    kind: Literal["replay"] = "replay"
    name: PlayerName
    data: Path
    model: ReplayModelSpec

    @field_validator("data")
    @classmethod
    def _data_path(cls, v: Path, info: ValidationInfo) -> Path:
        return _resolve(v, info)


PlayerSpec = Annotated[
    Union[
        DirectPlayerSpec,
        LinearPlayerSpec,
        TwoModePlayerSpec,
        TableBundlePlayerSpec,
        TableNoisyPlayerSpec,
        ReplayPlayerSpec,
    ],
    Field(discriminator="kind"),
]


# ============ Prior Schemas ============

class NormalPriorSpec(StrictModel):
    """N(mean, cov); the standard normal when both are omitted."""

    kind: Literal["normal"] = "normal"
    mean: Optional[List[float]] = None
    cov: Optional[List[List[float]]] = None


class BoxPriorSpec(StrictModel):
    kind: Literal["box"] = "box"
    lower: List[float]
    upper: List[float]


PriorSpec = Annotated[Union[NormalPriorSpec, BoxPriorSpec], Field(discriminator="kind")]


# ============ Experiment Schemas ============

class SyntheticSpec(StrictModel):
    m_grid: List[Annotated[int, Field(ge=1)]] = Field(default_factory=lambda: list(DEFAULT_M_GRID), min_length=1)
    trials: Annotated[int, Field(ge=1)] = 10
    mc_samples: Optional[Annotated[int, Field(ge=1000)]] = None


class SweepSetting(StrictModel):
    """One setting of a fair-share sweep: spec fields to override, keyed by player name."""

    label: PlayerName
    players: Dict[PlayerName, Dict[str, Any]] = Field(default_factory=dict)

    @field_validator("players")
    @classmethod
    def _keep_names(cls, v: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        for name, fields in v.items():
            if "name" in fields:
                raise ValueError(f"a sweep cannot rename player {name}")
        return v


class FairShareSpec(StrictModel):
    initial_counts: List[Annotated[int, Field(ge=1)]]
    base_rate: Annotated[int, Field(ge=1)]
    min_rate: Annotated[int, Field(ge=1)] = 1
    max_rate: Annotated[int, Field(ge=1)] = 10_000
    iterations: Annotated[int, Field(ge=1)] = 30
    burn_in: Annotated[int, Field(ge=0)] = 5
    delta_threshold: PositiveFloat = 0.1
    consecutive_window: Annotated[int, Field(ge=1)] = 5
    estimator: Literal["posterior_mean", "mle"] = "posterior_mean"
    allow_warm_up: bool = False
    mc_samples: Optional[Annotated[int, Field(ge=1000)]] = None
    sweep: List[SweepSetting] = Field(default_factory=list)

    @field_validator("sweep")
    @classmethod
    def _unique_labels(cls, v: List[SweepSetting]) -> List[SweepSetting]:
        labels = [s.label for s in v]
        if len(set(labels)) != len(labels):
            raise ValueError(f"sweep labels must be unique, got {labels}")
        return v


class ValuateSpec(StrictModel):
    m: Annotated[int, Field(ge=1)]
    permutations: Optional[Annotated[int, Field(ge=1)]] = None
    mc_samples: Optional[Annotated[int, Field(ge=1000)]] = None


ExperimentKind = Literal["synthetic", "fairshare", "valuate"]


class ExperimentConfig(StrictModel):
    """A complete experiment: players, prior, seed and per-subcommand settings."""

    kind: Optional[ExperimentKind] = None
    seed: Annotated[int, Field(ge=0, lt=2**64)]
    k: Annotated[int, Field(ge=1)]
    theta_star: Optional[List[float]] = None
    players: List[PlayerSpec] = Field(min_length=1)
    prior: PriorSpec = Field(default_factory=NormalPriorSpec)
    output_dir: Optional[Path] = None
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    fairshare: Optional[FairShareSpec] = None
    valuate: Optional[ValuateSpec] = None

    @model_validator(mode="after")
    def _consistent(self):
        names = [p.name for p in self.players]
        if len(set(names)) != len(names):
            raise ValueError(f"player names must be unique, got {names}")
        if self.theta_star is not None and len(self.theta_star) != self.k:
            raise ValueError(f"theta_star has {len(self.theta_star)} entries for k={self.k}")
        if any(isinstance(p, TwoModePlayerSpec) for p in self.players) and self.k % 2:
            raise ValueError(f"two_mode players need an even k, got {self.k}")
        prior = self.prior
        if isinstance(prior, BoxPriorSpec) and not len(prior.lower) == len(prior.upper) == self.k:
            raise ValueError(f"box prior bounds must have {self.k} entries")
        if isinstance(prior, NormalPriorSpec):
            if prior.mean is not None and len(prior.mean) != self.k:
                raise ValueError(f"prior mean must have {self.k} entries")
            if prior.cov is not None and (len(prior.cov) != self.k or any(len(r) != self.k for r in prior.cov)):
                raise ValueError(f"prior cov must be {self.k} x {self.k}")
        if self.fairshare is not None and len(self.fairshare.initial_counts) != len(self.players):
            raise ValueError(
                f"fairshare.initial_counts has {len(self.fairshare.initial_counts)} entries "
                f"for {len(self.players)} players"
            )
        if self.fairshare is not None:
            for setting in self.fairshare.sweep:
                unknown = sorted(set(setting.players) - set(names))
                if unknown:
                    raise ValueError(f"sweep setting {setting.label} names unknown players {unknown}")
        return self

    @property
    def true_theta(self) -> List[float]:
        """theta_star, defaulting to (1, -1, 0.5, 2) when k = 4."""
        if self.theta_star is not None:
            return list(self.theta_star)
        if self.k == len(DEFAULT_THETA_STAR):
            return list(DEFAULT_THETA_STAR)
        raise ConfigError(f"theta_star is required for k={self.k}")


def format_validation_error(error: ValidationError) -> str:
    lines = []
    for e in error.errors():
        where = ".".join(str(part) for part in e["loc"]) or "<root>"
        lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data, context={"base_dir": base_dir})
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {format_validation_error(e)}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return parse_config(data, path.parent)


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()
