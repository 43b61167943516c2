"""Argument handling shared by the experiment subcommands."""
import argparse
from pathlib import Path

from ..errors import ConfigError
from ..models.schemas import ExperimentConfig, load_config, parse_config


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="experiment JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def load_experiment(args: argparse.Namespace, command: str) -> ExperimentConfig:
    """Load the config, check it targets this command and apply CLI overrides."""
    config = load_config(args.config)
    if config.kind is not None and config.kind != command:
        raise ConfigError(f"{args.config} is a {config.kind} config, not {command}")

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if getattr(args, "trials", None) is not None:
        overrides["synthetic"] = {**config.synthetic.model_dump(mode="json"), "trials": args.trials}
    if not overrides:
        return config
    # paths in the dump are already resolved
    return parse_config({**config.model_dump(mode="json", exclude_none=True), **overrides})
