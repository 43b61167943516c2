"""Shared fixtures."""
import numpy as np
import pytest

from fairgame.config import get_settings
from fairgame.core.players import DirectObservationModel, LinearGaussianModel

THETA_STAR = np.array([1.0, -1.0, 0.5, 2.0])


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    for var in (
        "FAIRGAME_THREADS",
        "FAIRGAME_MC_SAMPLES",
        "FAIRGAME_MC_CHUNK",
        "FAIRGAME_FISHER_CHUNK",
        "FAIRGAME_SHAPLEY_MC_BATCH",
    ):
        monkeypatch.delenv(var, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def theta_star():
    return THETA_STAR.copy()


@pytest.fixture
def synthetic_models():
    """Linear (known noise), direct and linear (unknown noise) players on a 4-d parameter."""
    return [
        LinearGaussianModel(4, 1.0, name="P1"),
        DirectObservationModel.isotropic(4, 2.5, name="P2"),
        LinearGaussianModel(4, 1.1, noise_known=False, name="P3"),
    ]
