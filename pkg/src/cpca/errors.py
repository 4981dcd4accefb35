class CpcaError(Exception):
    """Base class for all library errors."""


class ValidationError(CpcaError, ValueError):
    """Malformed or inconsistent input."""


class InfeasibleError(ValidationError):
    """A point violates the domain constraints beyond tolerance.

    ``violations`` lists ``(row, constraint, slack)`` triples.
    """

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DegenerateDataError(CpcaError, ValueError):
    """The data carry no variation in the directions still available."""


class NonsmoothPointError(CpcaError):
    """The objective is not differentiable at the requested direction.

    Raised when some datum has two or more binding constraints at its
    optimal projection. ``indices`` holds the offending data rows.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class QPNonConvergence(CpcaError, RuntimeError):
    """The projection onto a convex principal set did not converge."""


class ComponentError(CpcaError):
    """Failure while fitting component ``index`` (1-based)."""

    def __init__(self, index, cause):
        super().__init__(f"component {index}: {cause}")
        self.index = index
        self.cause = cause
