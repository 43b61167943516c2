"""`fairshare`: iterative fair data sharing."""
import logging

from ..services.experiments import output_dir, run_fairshare_experiment
from .common import add_common_arguments, load_experiment

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("fairshare", help="fair data-sharing run")
    add_common_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    config = load_experiment(args, "fairshare")
    out = output_dir(config, "fairshare")
    logger.info(f"Running fair sharing for {len(config.players)} players, seed {config.seed}")
    outputs = run_fairshare_experiment(config, out)
    logger.info(f"Wrote {len(outputs)} files to {out}")
