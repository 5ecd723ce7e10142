"""Exception types shared across the package."""


class GradmatchError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatch(GradmatchError, ValueError):
    """Inputs have incompatible shapes or index ranges."""


class NotPositiveDefinite(GradmatchError):
    """A matrix that must be positive definite failed its Cholesky factorization."""


class OptimFailed(GradmatchError):
    """No optimizer start produced a usable improvement over the initial point."""


class Singular(GradmatchError):
    """A linear system is numerically singular (typically unidentifiable parameters)."""


class NonFiniteState(GradmatchError):
    """Numerical integration produced a non-finite state value."""


class NonFiniteEncountered(GradmatchError):
    """A non-finite quantity appeared during inference."""


class ConfigError(GradmatchError, ValueError):
    """An experiment configuration or data file failed validation."""
