"""Exception hierarchy shared across the package."""


class VarintError(Exception):
    """Base class for all errors raised by varint."""


class ConfigurationError(VarintError):
    """Invalid configuration value (bad precision, eccentricity, config key...)."""


class SingularityError(VarintError):
    """Gravitational collision: configuration too close to the potential singularity."""


class UnsupportedOrderError(VarintError):
    """Requested derivative order not available for this model."""


class NonMonotoneTimeError(VarintError):
    """Physical time failed to increase (t_{k+1} <= t_k, or t'(a) <= 0)."""


class MonitorDomainError(VarintError):
    """Monitor function non-positive or undefined at the requested point."""


class SolverError(VarintError):
    """Base class for nonlinear-solver failures."""


class NonconvergenceError(SolverError):
    """Newton iteration exhausted without meeting the tolerance.

    Carries the best iterate found so callers can diagnose the stall.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class IllPosednessError(SolverError):
    """Singular or numerically singular Jacobian: the update equations do not
    determine the unknowns (e.g. the time step of a free particle at rest)."""


class IntegrationError(VarintError):
    """A trajectory run aborted mid-way.  Carries the partial trajectory."""

    def __init__(self, message, trajectory=None, cause=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.cause = cause


class StiffnessError(VarintError):
    """Reference solver step-size underflow (stiffness or collision approach)."""
