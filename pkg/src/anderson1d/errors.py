"""Exception types shared across the package."""


class Anderson1dError(Exception):
    """Base class for all package-specific errors."""


class FlavorMismatch(Anderson1dError):
    """Operation requires the other model flavor (continuum vs discrete)."""


class OutOfInterval(Anderson1dError):
    """Requested positions fall outside the sampled interval."""


class ZeroState(Anderson1dError):
    """A direction is undefined for the zero vector."""


class EigenvalueHit(Anderson1dError):
    """A real-energy solve hit a numerically exact eigenvalue."""


class SingularReduction(Anderson1dError):
    """The 2x2 reduction matrix is numerically singular."""


class InsufficientSamples(Anderson1dError):
    """Too few Monte Carlo samples for a meaningful estimate."""


class DegenerateFit(Anderson1dError):
    """The requested fit window carries no usable signal."""


class ConfigError(Anderson1dError):
    """Experiment configuration failed schema validation."""
