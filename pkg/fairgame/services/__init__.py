"""Services package."""
from .fairshare import FairShareConfig, FairShareRunner, delta_stat, iter_metric, rate_step, run
from .experiments import run_fairshare_experiment, run_synthetic_convergence, run_valuation

__all__ = [
    "FairShareConfig",
    "FairShareRunner",
    "delta_stat",
    "iter_metric",
    "rate_step",
    "run",
    "run_fairshare_experiment",
    "run_synthetic_convergence",
    "run_valuation",
]
