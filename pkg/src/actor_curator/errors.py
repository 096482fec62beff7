"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration or parameter value."""


class DegenerateDistributionError(ValueError):
    """A weight vector cannot be normalized into a distribution."""


class InfeasibleFloorError(ValueError):
    """Probability floor alpha * dim exceeds one."""


class StateError(RuntimeError):
    """An object is missing state required by the requested operation."""


class LogicError(RuntimeError):
    """An internal invariant was violated (e.g. sampling a zero-probability item)."""


class NumericError(FloatingPointError):
    """Non-finite values appeared in a computation."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)
