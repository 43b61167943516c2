"""Command-line subcommands."""
from .synthetic import register as register_synthetic
from .fairshare import register as register_fairshare
from .valuate import register as register_valuate
from .schema import register as register_schema

__all__ = ["register_synthetic", "register_fairshare", "register_valuate", "register_schema"]
