"""Exception types raised across the package."""


class SafeBlendError(Exception):
    """Base class for all package errors."""


class DimensionError(SafeBlendError, ValueError):
    pass


class NotPositiveDefinite(SafeBlendError, ValueError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class NotSymmetric(SafeBlendError, ValueError):
    pass


class RankDeficient(SafeBlendError):
    """Equality rows of the constraint system lose full row rank at ``x``."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class RejectionBudgetExceeded(SafeBlendError):
    pass


class IterationLimit(SafeBlendError):
    pass


class NumericalFailure(SafeBlendError):
    pass


class NoFeasibleRule(SafeBlendError):
    """The decision-rule problem cannot certify a non-negative worst-case slack."""

    def __init__(self, message, t_star=None):
        super().__init__(message)
        self.t_star = t_star


class SafeSlackDegenerate(SafeBlendError):
    pass


class ZeroOptimalObjective(SafeBlendError, ZeroDivisionError):
    pass
