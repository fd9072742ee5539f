"""Exception hierarchy shared by every l2ereg module."""


class L2EError(Exception):
    """Base class for all errors raised by l2ereg."""


class InvalidInputError(L2EError, ValueError):
    """Input violates a precondition (non-finite entries, empty vectors, ...)."""


class DimensionMismatchError(InvalidInputError):
    """Array shapes disagree.

    ``dimension`` names the offending axis, e.g. ``"X.shape[1] vs len(beta)"``.
    """

    def __init__(self, dimension, expected, got):
        self.dimension = dimension
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch in {dimension}: expected {expected}, got {got}")


class InvalidPrecisionError(InvalidInputError):
    """Precision tau is not a positive finite number."""


class InvalidBoundsError(InvalidInputError):
    """Interval bounds are degenerate or inverted."""


class UnsupportedConstraintError(L2EError, ValueError):
    """ConstraintSpec kind has no proximal operator."""


class IncompatibleConstraintError(L2EError, ValueError):
    """Constraint cannot be used with the given design (shape constraints need X = I)."""


class SingularDesignError(L2EError, ValueError):
    """Design matrix is rank deficient where full column rank is required."""


class NumericalFailureError(L2EError, ArithmeticError):
    """A non-finite value appeared during an iterative update."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class DataError(L2EError, ValueError):
    """Problem with an input data file."""


class ParseError(DataError):
    """Non-numeric cell in a CSV file; row and column are 1-based file coordinates."""

    def __init__(self, path, row, column, value):
        self.path = path
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"{path}: non-numeric value {value!r} at row {row}, column {column}")


class MissingColumnError(DataError):
    """Requested response column does not exist."""


class ConstantColumnError(DataError):
    """Column with zero variance cannot be standardized."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")
