"""Experiment drivers behind the CLI subcommands.

Each driver resolves the configured players and prior, runs its
computation and writes its outputs plus a manifest into one directory.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..config import get_settings
from ..errors import ConfigError, NumericalError
from ..core.fisher import FisherMatrix
from ..core.game import banzhaf, limiting_game, members, shapley_exact, shapley_mc
from ..core.gauss import BoxUniform
from ..core.inference import (
    BoxUniformPrior,
    NormalPrior,
    PlayerSample,
    Prior,
    build_game,
    coalition_fisher,
    normal_prior_asymptote,
    uniform_prior_asymptote,
    with_noise_estimates,
    xi,
)
from ..core.players import (
    DirectObservationModel,
    GaussianDesign,
    LinearGaussianModel,
    PlayerModel,
    RademacherDesign,
    TwoModeMeanModel,
)
from ..models.schemas import (
    BoxPriorSpec,
    DirectPlayerSpec,
    ExperimentConfig,
    LinearPlayerSpec,
    ReplayPlayerSpec,
    SweepSetting,
    TableBundlePlayerSpec,
    TableNoisyPlayerSpec,
    TwoModePlayerSpec,
    parse_config,
)
from .fairshare import ESTIMATORS, FairShareConfig, run, summarize_deltas
from .features import FeatureTable
from .reporting import (
    difference_plot,
    emit_csv,
    emit_plots,
    emit_summary,
    emit_sweep_summary,
    write_frame,
    write_manifest,
)
from .sources import DataSource, ReplaySource, SyntheticSource, bundle_player, noisy_observer_from_table

logger = logging.getLogger(__name__)

DESIGNS = {"gaussian": GaussianDesign, "rademacher": RademacherDesign}


@dataclass
class ResolvedPlayer:
    name: str
    model: PlayerModel
    source: DataSource
    inputs: Tuple[Path, ...] = ()

    @property
    def fisher(self) -> FisherMatrix:
        """Per-datum Fisher information at the true noise level."""
        return self.model.analytic_fisher(getattr(self.model, "noise_sd", None))


def _model_from_spec(spec, k: int, name: str) -> PlayerModel:
    if isinstance(spec, DirectPlayerSpec):
        cov = spec.noise_var * np.eye(k) if spec.noise_cov is None else np.asarray(spec.noise_cov)
        return DirectObservationModel(k, cov, name)
    if isinstance(spec, LinearPlayerSpec):
        return LinearGaussianModel(k, spec.noise_sd, spec.noise_known, DESIGNS[spec.design](), name)
    if isinstance(spec, TwoModePlayerSpec):
        return TwoModeMeanModel(k // 2, spec.noise_sd, spec.ratio, name)
    raise ConfigError(f"player kind {spec.kind} has no generative model")


def resolve_players(config: ExperimentConfig) -> List[ResolvedPlayer]:
    """Turn player specs into models with data sources.

    Table-backed players derive their randomness from (seed, player index).
    """
    out = []
    for idx, spec in enumerate(config.players):
        if isinstance(spec, TableBundlePlayerSpec):
            table = FeatureTable.read_csv(spec.table)
            model, source = bundle_player(
                table, spec.data_size, spec.subset_size, spec.sampling,
                seed=(config.seed, idx), calibration=spec.calibration, name=spec.name,
            )
            out.append(ResolvedPlayer(spec.name, model, source, (spec.table,)))
        elif isinstance(spec, TableNoisyPlayerSpec):
            table = FeatureTable.read_csv(spec.table)
            model, source = noisy_observer_from_table(
                table, spec.ratio, spec.nan_fraction, spec.sigma, seed=(config.seed, idx), name=spec.name,
            )
            out.append(ResolvedPlayer(spec.name, model, source, (spec.table,)))
        elif isinstance(spec, ReplayPlayerSpec):
            model = _model_from_spec(spec.model, config.k, spec.name)
            out.append(ResolvedPlayer(spec.name, model, ReplaySource.from_csv(spec.data, spec.name), (spec.data,)))
        else:
            model = _model_from_spec(spec, config.k, spec.name)
            out.append(ResolvedPlayer(spec.name, model, SyntheticSource(model, config.true_theta)))
        if out[-1].model.k != config.k:
            raise ConfigError(f"player {spec.name} has dimension {out[-1].model.k}, config has k={config.k}")
    return out


def build_prior(config: ExperimentConfig) -> Prior:
    spec = config.prior
    if isinstance(spec, BoxPriorSpec):
        return BoxUniformPrior(BoxUniform(spec.lower, spec.upper))
    mean = np.zeros(config.k) if spec.mean is None else np.asarray(spec.mean, dtype=float)
    cov = np.eye(config.k) if spec.cov is None else np.asarray(spec.cov, dtype=float)
    return NormalPrior(mean, cov)


def output_dir(config: ExperimentConfig, command: str) -> Path:
    if config.output_dir is not None:
        return config.output_dir
    return get_settings().OUTPUT_DIR / f"{command}-seed{config.seed}"


def _pairs(names: Sequence[str]) -> List[Tuple[int, int, str]]:
    return [(i, j, f"{names[i]}-{names[j]}") for i, j in combinations(range(len(names)), 2)]


def _synthetic_trial(
    models, sources, prior: Prior, m: int, words: Tuple[int, ...], mc_samples: int, mc_chunk: int
) -> np.ndarray:
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(list(words)).spawn(len(models))]
    samples = [PlayerSample(model, source.draw(m, rng)) for model, source, rng in zip(models, sources, rngs)]
    game = build_game(
        with_noise_estimates(samples), prior, seed=words, mc_samples=mc_samples, n_jobs=1, mc_chunk=mc_chunk
    )
    return shapley_exact(game).values


def run_synthetic_convergence(config: ExperimentConfig, out_dir: Optional[Path] = None, n_jobs=None) -> List[Path]:
    """Pairwise Shapley differences over an m-grid and trials, next to the limiting-game values."""
    players = resolve_players(config)
    if any(isinstance(p.source, ReplaySource) for p in players):
        raise ConfigError("replay players cannot serve independent synthetic trials")
    prior = build_prior(config)
    out_dir = output_dir(config, "synthetic") if out_dir is None else Path(out_dir)
    settings = get_settings()
    n_jobs = settings.THREADS if n_jobs is None else n_jobs
    mc_samples = settings.MC_SAMPLES if config.synthetic.mc_samples is None else config.synthetic.mc_samples
    models = [p.model for p in players]
    sources = [p.source for p in players]
    grid = config.synthetic.m_grid
    jobs = [(g, m, t) for g, m in enumerate(grid) for t in range(config.synthetic.trials)]
    logger.info(f"synthetic: {len(players)} players, {len(jobs)} jobs")

    phis = Parallel(n_jobs=n_jobs)(
        delayed(_synthetic_trial)(models, sources, prior, m, (config.seed, g, t), mc_samples, settings.MC_CHUNK)
        for g, m, t in jobs
    )
    pairs = _pairs([p.name for p in players])
    differences = pd.DataFrame(
        [
            {"m": m, "trial": t, "pair": label, "difference": float(phi[i] - phi[j])}
            for (g, m, t), phi in zip(jobs, phis)
            for i, j, label in pairs
        ]
    )
    limit_phi = shapley_exact(limiting_game([p.fisher for p in players])).values
    limits = pd.DataFrame(
        [{"pair": label, "difference": float(limit_phi[i] - limit_phi[j])} for i, j, label in pairs]
    )

    outputs = [
        write_frame(differences, out_dir / "shapley_differences.csv"),
        write_frame(limits, out_dir / "limiting_differences.csv"),
        difference_plot(differences, limits, out_dir / "shapley_differences.svg"),
    ]
    inputs = [path for p in players for path in p.inputs]
    outputs.append(write_manifest(out_dir, config, "synthetic", inputs, outputs))
    return outputs


def fairshare_config(config: ExperimentConfig, prior: Prior) -> FairShareConfig:
    spec = config.fairshare
    if spec is None:
        raise ConfigError("the fairshare subcommand needs a 'fairshare' section")
    return FairShareConfig(
        players=tuple(p.name for p in config.players),
        prior=prior,
        initial_counts=tuple(spec.initial_counts),
        base_rate=spec.base_rate,
        min_rate=spec.min_rate,
        max_rate=spec.max_rate,
        iterations=spec.iterations,
        burn_in=spec.burn_in,
        delta_threshold=spec.delta_threshold,
        consecutive_window=spec.consecutive_window,
        seed=config.seed,
        allow_warm_up=spec.allow_warm_up,
        mc_samples=spec.mc_samples,
    )


def _fairshare_records(config: ExperimentConfig, n_jobs=None):
    prior = build_prior(config)
    fs_config = fairshare_config(config, prior)
    players = resolve_players(config)
    records = run(
        fs_config,
        [p.model for p in players],
        [p.source for p in players],
        estimator=ESTIMATORS[config.fairshare.estimator],
        n_jobs=n_jobs,
    )
    return fs_config, players, records


def sweep_config(config: ExperimentConfig, setting: SweepSetting) -> ExperimentConfig:
    """The experiment with one sweep setting's player overrides applied."""
    data = config.model_dump(mode="json", exclude_none=True)
    data["players"] = [{**p, **setting.players.get(p["name"], {})} for p in data["players"]]
    data["fairshare"]["sweep"] = []
    data.pop("output_dir", None)
    try:
        # paths in the dump are already resolved
        return parse_config(data)
    except ConfigError as e:
        raise ConfigError(f"sweep setting {setting.label}: {e}") from e


def run_fairshare_experiment(config: ExperimentConfig, out_dir: Optional[Path] = None, n_jobs=None) -> List[Path]:
    """Fair-share run with its run records, delta summary and plots.

    A config with a ``fairshare.sweep`` runs every setting instead; see
    run_fairshare_sweep.
    """
    if config.fairshare is not None and config.fairshare.sweep:
        return run_fairshare_sweep(config, out_dir, n_jobs)
    out_dir = output_dir(config, "fairshare") if out_dir is None else Path(out_dir)
    logger.info(f"fairshare: {len(config.players)} players")

    fs_config, players, records = _fairshare_records(config, n_jobs)
    stats = summarize_deltas(records, fs_config)
    outputs = [
        emit_csv(records, out_dir / "run_records.csv"),
        emit_summary(stats, out_dir / "delta_summary.csv"),
        *emit_plots(records, out_dir),
    ]
    inputs = [path for p in players for path in p.inputs]
    outputs.append(write_manifest(out_dir, config, "fairshare", inputs, outputs))
    return outputs


def run_fairshare_sweep(config: ExperimentConfig, out_dir: Optional[Path] = None, n_jobs=None) -> List[Path]:
    """One fair-share run per sweep setting, all from the config seed.

    Each setting's records go to ``<label>/run_records.csv``; the delta
    statistics of every setting and pair go to ``sweep_summary.csv``.
    """
    if config.fairshare is None or not config.fairshare.sweep:
        raise ConfigError("a sweep needs a non-empty 'fairshare.sweep' list")
    out_dir = output_dir(config, "fairshare") if out_dir is None else Path(out_dir)
    rows = []
    outputs = []
    inputs = []
    for setting in config.fairshare.sweep:
        logger.info(f"fairshare sweep: setting {setting.label}")
        fs_config, players, records = _fairshare_records(sweep_config(config, setting), n_jobs)
        rows.extend((setting.label, s) for s in summarize_deltas(records, fs_config))
        outputs.append(emit_csv(records, out_dir / setting.label / "run_records.csv"))
        inputs.extend(path for p in players for path in p.inputs)
    outputs.append(emit_sweep_summary(rows, out_dir / "sweep_summary.csv"))
    outputs.append(write_manifest(out_dir, config, "fairshare", inputs, outputs))
    return outputs


def _asymptote(config: ExperimentConfig, prior: Prior, coalition_data: Sequence[PlayerSample]) -> Optional[float]:
    try:
        I_S, m = coalition_fisher(coalition_data)
        if isinstance(prior, BoxUniformPrior):
            return uniform_prior_asymptote(m, config.k, prior.box, I_S)
        xi_value = xi(prior.mean, prior.cov, config.true_theta)
        return normal_prior_asymptote(m, config.k, xi_value, I_S)
    except (ConfigError, NumericalError) as e:
        logger.debug(f"no asymptote for coalition: {e}")
        return None


def run_valuation(config: ExperimentConfig, out_dir: Optional[Path] = None, n_jobs=None) -> List[Path]:
    """Coalition values and Shapley, Banzhaf and limiting-game attributions at a fixed m."""
    spec = config.valuate
    if spec is None:
        raise ConfigError("the valuate subcommand needs a 'valuate' section")
    prior = build_prior(config)
    players = resolve_players(config)
    out_dir = output_dir(config, "valuate") if out_dir is None else Path(out_dir)
    n = len(players)
    logger.info(f"valuate: {n} players, m={spec.m}")

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(n)]
    samples = with_noise_estimates(
        [PlayerSample(p.model, p.source.draw(spec.m, rng, 0)) for p, rng in zip(players, rngs)]
    )
    game = build_game(samples, prior, seed=config.seed, mc_samples=spec.mc_samples, n_jobs=n_jobs)

    names = [p.name for p in players]
    coalitions = pd.DataFrame(
        [
            {
                "coalition": "+".join(names[i] for i in members(S, n)),
                "size": len(members(S, n)),
                "value": game(S),
                "std_error": 0.0 if game.std_errors is None else float(game.std_errors[S]),
                "asymptote": _asymptote(config, prior, [samples[i] for i in members(S, n)]),
            }
            for S in range(1, 1 << n)
        ]
    )
    coalitions["asymptote"] = coalitions["asymptote"].astype(float)

    attributions = pd.DataFrame(
        {
            "player": names,
            "shapley": shapley_exact(game).values,
            "banzhaf": banzhaf(game).values,
            "limiting_shapley": shapley_exact(limiting_game([p.fisher for p in players])).values,
        }
    )
    if spec.permutations is not None:
        estimate = shapley_mc(game, spec.permutations, seed=config.seed, n_jobs=n_jobs)
        attributions["shapley_mc"] = estimate.values
        attributions["shapley_mc_std_error"] = estimate.std_errors

    outputs = [
        write_frame(coalitions, out_dir / "coalition_values.csv"),
        write_frame(attributions, out_dir / "attributions.csv"),
    ]
    inputs = [path for p in players for path in p.inputs]
    outputs.append(write_manifest(out_dir, config, "valuate", inputs, outputs))
    return outputs


EXPERIMENTS = {
    "synthetic": run_synthetic_convergence,
    "fairshare": run_fairshare_experiment,
    "valuate": run_valuation,
}
