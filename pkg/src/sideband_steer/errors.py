"""Exception types shared across the package."""


class SidebandSteerError(Exception):
    """Base class for package-specific failures."""


class TruncationOverflowError(SidebandSteerError):
    """State support would leave the simulation window; enlarge dim_sim."""


class SearchExhaustedError(SidebandSteerError):
    """No winding index up to s_max met the budget.

    Carries the best candidate found so callers can report how close the
    search got, and the index of the failing segment when raised during a
    plan lift.
    """

    def __init__(self, message, best_s=None, best_bound=None, segment_index=None):
        super().__init__(message)
        self.best_s = best_s
        self.best_bound = best_bound
        self.segment_index = segment_index


class InternalConsistencyError(SidebandSteerError):
    """An exact mathematical identity failed numerically: an implementation bug."""
