"""Numerical core: Gaussians, games, player models, Fisher information, inference."""
from .game import CharacteristicFunction, banzhaf, limiting_game, shapley_exact, shapley_mc
from .gauss import BoxUniform, Gaussian, entropy, kl_gauss, log_det
from .inference import BoxUniformPrior, NormalPrior, PlayerSample, build_game

__all__ = [
    "CharacteristicFunction",
    "banzhaf",
    "limiting_game",
    "shapley_exact",
    "shapley_mc",
    "BoxUniform",
    "Gaussian",
    "entropy",
    "kl_gauss",
    "log_det",
    "BoxUniformPrior",
    "NormalPrior",
    "PlayerSample",
    "build_game",
]
