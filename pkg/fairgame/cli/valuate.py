"""`valuate`: coalition values and attributions at a fixed data size."""
import logging

from ..services.experiments import output_dir, run_valuation
from .common import add_common_arguments, load_experiment

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("valuate", help="value every coalition at a fixed m")
    add_common_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    config = load_experiment(args, "valuate")
    out = output_dir(config, "valuate")
    logger.info(f"Valuing {len(config.players)} players, seed {config.seed}")
    outputs = run_valuation(config, out)
    logger.info(f"Wrote {len(outputs)} files to {out}")
