"""Exception types shared across the package."""


class SabrError(Exception):
    """Base class."""


class ConfigError(SabrError, ValueError):
    """Invalid model or experiment configuration."""


class DomainError(SabrError, ValueError):
    """Evaluation point or argument outside the numerical domain."""


class ClockRangeError(DomainError):
    """Requested level lies beyond the range of an additive functional."""


class CoercivityError(SabrError, RuntimeError):
    """A sublevel scan could not bracket the set inside a compact box."""
