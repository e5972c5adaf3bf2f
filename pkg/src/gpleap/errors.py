"""Exception types shared across the package."""


class GpleapError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(GpleapError, ValueError):
    """A config object or config file violates its invariants."""


class UsageError(GpleapError, ValueError):
    """An operation was called with arguments it cannot serve."""


class UnsupportedOperationError(GpleapError):
    """The requested quantity is outside what this component supports."""


class ConditioningError(GpleapError):
    """A covariance factorization failed even after a jitter retry."""


class IntegrationOverflowError(GpleapError):
    """An integrator produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
