"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """Inconsistent model, schedule, reward or solver configuration."""


class StateError(RuntimeError):
    """Operation invoked on an object that is not ready for it (e.g. unfitted)."""


class FitError(RuntimeError):
    """A regression or training step failed."""
