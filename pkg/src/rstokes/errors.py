"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance.

    ``index`` carries the (k, j) grid position when raised from a batch call.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvariantViolation(RuntimeError):
    """An internal invariant failed; indicates a bug rather than bad input."""


class PreconditionError(ValueError):
    """A documented precondition of a verification routine is not met."""


class IllConditionedWarning(UserWarning):
    """Backward recovery amplifies some mode beyond the configured threshold."""
