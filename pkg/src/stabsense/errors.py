"""Exception types raised across the package."""


class DomainError(ValueError):
    """An input lies outside the domain where an operation is defined."""


class IntegrationError(RuntimeError):
    """The ODE integrator failed (typically step-size underflow)."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class BreakdownSingularityError(DomainError):
    """The stabilizing control law was evaluated at v_z = 0."""


class InconsistentStateError(RuntimeError):
    """Internal classification disagreed with a closed-form branch."""


class FitError(ValueError):
    """A slope fit could not be performed or produced a non-positive slope."""


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
