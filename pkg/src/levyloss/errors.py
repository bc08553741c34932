"""Exception types shared across the package."""


class LevylossError(Exception):
    """Base class for all package errors."""


class DomainError(LevylossError, ValueError):
    """An exponent lies outside the interval where the Laplace exponent is finite."""


class NoRootError(LevylossError):
    """The Laplace exponent has no positive zero."""


class PhaseError(LevylossError, ValueError):
    """A barrier level is not attained by any piece of the periodic function."""


class ConfigError(LevylossError, ValueError):
    """Invalid run configuration (file or programmatic)."""


class SimulationError(LevylossError, RuntimeError):
    """A path simulation produced non-finite state."""


class EmptyHistogramError(LevylossError, ValueError):
    """An occupation histogram carries no mass."""


class InfiniteLossError(LevylossError):
    """The jump measure has a non-integrable positive tail, so the loss rate is infinite."""


class InsufficientDataError(LevylossError, ValueError):
    """Not enough usable points for an asymptotic fit."""
