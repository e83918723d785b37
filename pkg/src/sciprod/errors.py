"""Exception hierarchy shared across the package."""


class SciprodError(Exception):
    """Base class for all package errors."""


class ValidationError(SciprodError):
    """Invalid inputs: bad domain values, malformed datasets, bad config."""


class NumericalError(SciprodError):
    """A numeric routine failed to converge or produced non-finite values."""


class UnboundedCompensationError(NumericalError):
    """No positive indifference salary exists for the offer."""


class EstimationFailedError(NumericalError):
    """Every candidate parameter vector was penalized during the search."""


class InfeasibleConstraintError(NumericalError):
    """A planner constraint cannot be satisfied (e.g. nobody fundraises)."""
