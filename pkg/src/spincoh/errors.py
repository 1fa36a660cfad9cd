"""Exception types shared across the package."""


class SpincohError(Exception):
    """Base class for all errors raised by spincoh."""


class ConfigError(SpincohError):
    """Invalid configuration, file format, or unknown identifier."""


class CoincidentSpinsError(SpincohError):
    """Two spins closer than the minimum point-dipole separation."""


class MissingCouplingError(SpincohError):
    """A required coupling tensor is absent."""


class DimensionOverflowError(SpincohError):
    """A requested exact computation exceeds the configured size limits."""


class InsufficientDecayError(SpincohError):
    """A coherence curve never decays far enough to be fitted."""

    def __init__(self, message, min_abs=None):
        super().__init__(message)
        self.min_abs = min_abs


class NonConvergentIntegralError(SpincohError):
    """Adaptive quadrature failed to reach the requested tolerance."""
