"""Exception types raised across the package."""


class ASNEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ASNEError, ValueError):
    """An invalid colony, trainer or experiment configuration."""


class TraversalError(ASNEError, RuntimeError):
    """An ant could not make a move (empty candidate set)."""


class GenomeError(ASNEError, ValueError):
    """A genome violates its structural invariants."""


class DivergenceError(ASNEError, FloatingPointError):
    """Training produced a non-finite value."""


class DataError(ASNEError, ValueError):
    """Malformed or unusable time-series input."""
