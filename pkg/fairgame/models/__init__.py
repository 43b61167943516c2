"""Schemas and record types."""
from .records import DeltaStats, RunRecord
from .schemas import ExperimentConfig, config_schema, load_config, parse_config

__all__ = [
    "DeltaStats",
    "RunRecord",
    "ExperimentConfig",
    "config_schema",
    "load_config",
    "parse_config",
]
