"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, shapes or configuration documents."""


class DimensionError(ValueError):
    """Array length or shape does not match what the operation expects."""


class NumericalBlowupError(FloatingPointError):
    """A simulation or training step produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UsageError(RuntimeError):
    """An object was used out of order, e.g. stepping a finished episode."""
