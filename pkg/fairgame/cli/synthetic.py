"""`synthetic`: Shapley differences converging to the limiting game."""
import logging

from ..services.experiments import output_dir, run_synthetic_convergence
from .common import add_common_arguments, load_experiment

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synthetic", help="synthetic convergence experiment")
    add_common_arguments(parser)
    parser.add_argument("--trials", type=int, default=None, help="override the number of trials")
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    config = load_experiment(args, "synthetic")
    out = output_dir(config, "synthetic")
    logger.info(f"Running synthetic convergence, seed {config.seed}")
    outputs = run_synthetic_convergence(config, out)
    logger.info(f"Wrote {len(outputs)} files to {out}")
