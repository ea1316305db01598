"""Exception types shared across the package."""


class HeatGafError(Exception):
    """Base class for package errors."""


class ExpOverflowError(HeatGafError, OverflowError):
    """An exponent or coefficient magnitude exceeds double-precision range."""


class DegenerateInputError(HeatGafError, ValueError):
    """Input carries too little information for the requested estimate."""


class DomainError(HeatGafError, ValueError):
    """A flow time or parameter lies outside the admissible region."""

    def __init__(self, message, radius=None, sigma=None):
        super().__init__(message)
        self.radius = radius
        self.sigma = sigma


class SingularFlowError(HeatGafError, ZeroDivisionError):
    """The closed-form flow hits a pole (1 + quad*tau == 0)."""


class NonSimpleZeroError(HeatGafError, ValueError):
    """A zero expected to be simple has (numerically) vanishing derivative."""


class CollisionError(HeatGafError, ValueError):
    """Two zeros, or a zero and the base point, coincide."""


class ConvergenceError(HeatGafError, RuntimeError):
    """An iterative method failed to converge."""


class MissingMomentError(HeatGafError, KeyError):
    """A moment table lacks an entry needed by a formula."""
