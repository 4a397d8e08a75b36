"""
Exception hierarchy; every class carries the CLI exit code it maps to.
"""


class JafarError(Exception):
    """Base class for all package errors"""

    exit_code = 1


class ConfigError(JafarError):
    """Invalid arguments or configuration"""

    exit_code = 2


class DataError(JafarError):
    """Unreadable or inconsistent input data"""

    exit_code = 3


class DataParseError(DataError):
    """Non-numeric cell in a data file"""

    def __init__(self, path, row, column, value):
        self.path = str(path)
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"cannot parse {value!r} as a number in {self.path} "
            f"(row {row}, column {column!r})"
        )


class StructuralError(DataError):
    """Views disagree on subjects or shapes"""


class ConstantFeatureError(DataError):
    """Feature without variance among observed entries"""

    def __init__(self, feature, view=None):
        self.feature = feature
        self.view = view
        where = f" in view {view!r}" if view is not None else ""
        super().__init__(f"feature {feature!r}{where} is constant or has fewer than 2 observed values")


class MarginError(DataError):
    """Feature margin unsuitable for the empirical-CDF copula"""


class SchemaMismatchError(DataError):
    """New data does not match the training schema"""


class PostprocessError(JafarError):
    """Archive cannot be aligned"""

    exit_code = 3


class NumericalError(JafarError):
    """Factorization failure in a sampler"""

    exit_code = 4

    def __init__(self, message, min_pivot=None):
        self.min_pivot = min_pivot
        if min_pivot is not None:
            message = f"{message} (minimum diagonal pivot {min_pivot:.3e})"
        super().__init__(message)


class ChainError(NumericalError):
    """Hard failure inside one Gibbs step"""

    def __init__(self, step, iteration, cause):
        self.step = step
        self.iteration = iteration
        self.cause = cause
        JafarError.__init__(self, f"step {step!r} failed at iteration {iteration}: {cause}")
        self.min_pivot = getattr(cause, "min_pivot", None)
