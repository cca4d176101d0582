"""Exception hierarchy shared by all modules."""


class AniflowError(Exception):
    """Base class for all errors raised by aniflow."""


class DegenerateVector(AniflowError, ValueError):
    """A direction vector (edge, tangent) is too short to evaluate on."""


class DimensionMismatch(AniflowError, ValueError):
    pass


class InvalidInput(AniflowError, ValueError):
    pass


class InvalidTime(InvalidInput):
    pass


class EigenFailure(AniflowError, RuntimeError):
    pass


class SingularSystem(AniflowError, RuntimeError):
    pass


class NewtonDiverged(AniflowError, RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ConfigError(AniflowError, ValueError):
    pass
