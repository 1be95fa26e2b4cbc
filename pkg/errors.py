# errors.py - exception hierarchy for phidep
#
# Two families: bad input (ValidationError, CLI exit code 2) and numeric
# failure (NumericalError, CLI exit code 3).


class PhidepError(Exception):
    """Base class for every error raised by the package."""


# ============================================================================
# VALIDATION ERRORS (exit code 2)
# ============================================================================

class ValidationError(PhidepError, ValueError):
    pass


class DomainError(ValidationError):
    """Argument outside the domain of a function (t <= 0, nonpositive price, d < 0)."""


class TieError(ValidationError):
    """Duplicate values in a column while ties are handled strictly."""


class DegenerateColumnError(ValidationError):
    """A column is constant, so its correlation is undefined."""


class MissingValueError(ValidationError):
    pass


class WindowTooLargeError(ValidationError):
    pass


class InsufficientSampleError(ValidationError):
    pass


class GroupStructureError(ValidationError):
    """Group sizes do not match the data."""


class DimensionError(ValidationError):
    pass


class BoundaryError(ValidationError):
    """A copula coordinate lies within the boundary guard of 0 or 1."""


class NestingConditionError(ValidationError):
    """Root parameter exceeds a child parameter or the families differ."""


class SpecParseError(ValidationError):
    pass


class OrderOverflowError(ValidationError):
    pass


# ============================================================================
# NUMERICAL ERRORS (exit code 3)
# ============================================================================

class NumericalError(PhidepError, ArithmeticError):
    pass


class SingularMatrixError(NumericalError):
    """A within-group correlation block is singular."""


class NonDifferentiableError(NumericalError):
    pass


class InfiniteEstimateError(NumericalError):
    """A test statistic was requested from an infinite (singular) estimate."""


class DensityUnavailableError(NumericalError):
    pass
