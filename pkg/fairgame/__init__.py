"""Parametric Bayesian learning games and fair data sharing."""

__version__ = "1.0.0"
