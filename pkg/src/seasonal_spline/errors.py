"""Exception types shared across the package."""


class SeasonalSplineError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SeasonalSplineError):
    """Malformed input: bad operator spec, grid, config, or coefficient blocks."""


class UnsupportedOperatorError(SeasonalSplineError):
    """Requested evaluation has no implemented closed form for this operator."""


class TruncationError(SeasonalSplineError):
    """A truncated series cannot meet the requested tail tolerance."""


class NotPeriodizableError(ValidationError):
    """Declared decay is too slow for the shift sum to converge."""


class IntegrationError(SeasonalSplineError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class AdmissibilityError(ValidationError):
    """A sensing functional is not admissible for the chosen operator pair."""


class IllPosedError(SeasonalSplineError):
    """The unregularized block is rank deficient on the sensing plan."""


class ConvergenceError(SeasonalSplineError):
    """Solver failed to converge; carries the best iterate and its KKT report."""

    def __init__(self, message, solution=None, report=None):
        super().__init__(message)
        self.solution = solution
        self.report = report


class ConditioningError(SeasonalSplineError):
    """Factorization failed even after jitter escalation."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter
