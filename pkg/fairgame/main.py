"""Command-line entry point."""
import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cli import register_fairshare, register_schema, register_synthetic, register_valuate
from .config import get_settings
from .errors import ConfigError, FairGameError, NumericalError, SourceExhaustedError

logger = logging.getLogger("fairgame")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgame",
        description="Bayesian learning games, Shapley attribution and fair data sharing",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_synthetic(subparsers)
    register_fairshare(subparsers)
    register_valuate(subparsers)
    register_schema(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=settings.LOG_LEVEL.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (NumericalError, SourceExhaustedError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as e:
        logger.error(f"Numerical failure: linear algebra: {e}")
        return EXIT_NUMERICAL
    except FairGameError as e:
        logger.error(f"Failed: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
