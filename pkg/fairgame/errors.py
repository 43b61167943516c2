"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit code 2 and ``NumericalError`` to exit code 3.
"""
from typing import Optional


class FairGameError(RuntimeError):
    """Base class for all fairgame failures."""


class ConfigError(FairGameError):
    """Invalid experiment or runtime configuration."""


class OutputError(FairGameError):
    """Failure writing an output file."""

    def __init__(self, message: str, path=None):
        super().__init__(f"{message} ({path})" if path is not None else message)
        self.path = path


class NumericalError(FairGameError):
    """A numerical routine could not produce a valid result."""


class DimensionMismatchError(NumericalError, ValueError):
    """Operands have incompatible shapes."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorisation failed.

    ``minor`` is the 1-based order of the first leading minor that is not
    positive; ``coalition`` is set when the matrix belongs to a coalition.
    """

    def __init__(self, minor: int, what: str = "matrix", coalition: Optional[tuple] = None):
        msg = f"{what} is not positive definite: leading minor {minor} is not positive"
        if coalition is not None:
            msg += f" (coalition {set(coalition) or '{}'})"
        super().__init__(msg)
        self.minor = minor
        self.coalition = coalition


class RankDeficientError(NumericalError):
    """A Gram or design matrix lacks full column rank."""

    def __init__(self, rank: int, k: int, what: str = "Gram matrix"):
        super().__init__(f"{what} is rank deficient: rank {rank} < {k}")
        self.rank = rank
        self.k = k


class SingularFisherError(NumericalError):
    """A Fisher information estimate cannot be inverted or log-determined."""

    def __init__(self, player, iteration: Optional[int] = None, remediation: str = ""):
        where = f"player {player}" + (f" at iteration {iteration}" if iteration is not None else "")
        msg = f"Fisher information of {where} is singular"
        if remediation:
            msg += f"; {remediation}"
        super().__init__(msg)
        self.player = player
        self.iteration = iteration


class MissingNoiseEstimateError(NumericalError):
    """An unknown-noise model was evaluated without a plug-in noise estimate."""


class TooManyPlayersError(NumericalError):
    """Exact enumeration requested for a game that is too large."""


class InsufficientDataError(NumericalError):
    """Not enough data points for the requested estimate."""


class SourceExhaustedError(FairGameError):
    """A finite data source cannot serve the requested count."""

    def __init__(self, player, requested: int, available: int, iteration: Optional[int] = None):
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(
            f"source of player {player} exhausted{where}: requested {requested}, {available} left"
        )
        self.player = player
        self.requested = requested
        self.available = available
        self.iteration = iteration
