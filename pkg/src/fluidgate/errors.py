"""Exception hierarchy shared across the package."""


class FluidgateError(Exception):
    """Base class for all package errors."""


class DimensionError(FluidgateError):
    """Structurally inconsistent LP or market data."""


class UsageError(FluidgateError):
    """An operation was called outside its stated preconditions."""


class ValidationError(FluidgateError):
    """Market/instance data violates the model assumptions."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SolverFailure(FluidgateError):
    """The simplex engine failed to terminate cleanly."""


class OracleLimitError(FluidgateError):
    """A brute-force oracle was asked for more work than its limit allows."""


class DegenerateError(FluidgateError):
    """A stability quantity was requested for a degenerate LP."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
