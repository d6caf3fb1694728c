"""Shared exception types."""


class AccuracyError(ValueError):
    """A numeric routine could not reach its accuracy target.

    Carries the achieved error estimate in .estimate when available.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class StabilityError(RuntimeError):
    """A marching scheme produced a non-positive diagonal coefficient."""


class TableRangeError(ValueError):
    """A request lies outside the range a table can answer for."""
