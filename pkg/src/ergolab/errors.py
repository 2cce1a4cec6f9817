"""Exception types shared across the package."""


class UsageError(ValueError):
    """Invalid arguments or violated preconditions."""


class NumericFailure(RuntimeError):
    """A numerical routine could not meet its tolerance.

    Attributes
    ----------
    best_estimate : float or None
        Best available value at the time of failure.
    detail : dict
        Free-form context (offending row index, reached depth, ...).
    """

    def __init__(self, message, best_estimate=None, **detail):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.detail = detail


class CheckFailed(RuntimeError):
    """A property probe ran to completion but its check did not pass."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
