"""Exception and warning types raised across the package."""


class SelLabError(Exception):
    """Base class for all package errors."""


class ParameterError(SelLabError, ValueError):
    """Equation parameters outside the admissible range."""


class DomainError(SelLabError, ValueError):
    """A scalar helper was called outside its domain."""


class GridIndexError(SelLabError, IndexError):
    """A stencil was requested at a boundary or exterior node."""


class EmptyBallError(SelLabError, ValueError):
    """No grid node lies in the requested ball."""


class ConvergenceError(SelLabError, RuntimeError):
    """The iterative solver hit its iteration cap above tolerance.

    The partially converged field and its report are attached so callers
    can still inspect them.
    """

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class ZoomError(SelLabError, ValueError):
    """A zoom or rescaling leaves the field's domain, or selects no nodes."""


class EmptyZeroSetError(SelLabError, ValueError):
    """A distance query needs at least one zero node."""


class AnalysisError(SelLabError, ValueError):
    """An analysis precondition is not met."""


class TooFewRadiiError(AnalysisError):
    pass


class NotOnFreeBoundaryError(AnalysisError):
    pass


class UnderResolvedError(AnalysisError):
    pass


class EmptySubdomainError(AnalysisError):
    pass


class NonMonotoneInputError(AnalysisError):
    pass


class NotNormalizedError(AnalysisError):
    pass


class NonPositiveValueError(AnalysisError):
    pass


class ManifestError(SelLabError, ValueError):
    """A run manifest could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MonotonicityWarning(UserWarning):
    """A continuation chain is not pointwise non-increasing."""


class DivergenceWarning(UserWarning):
    """Consecutive gaps of an epsilon schedule stopped shrinking."""
