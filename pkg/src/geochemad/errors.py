"""Exception hierarchy.

Each family maps to a CLI exit code: configuration problems exit 1, data
problems exit 2, numeric or training failures exit 3.
"""


class GeochemadError(Exception):
    exit_code = 1


class ConfigError(GeochemadError, ValueError):
    exit_code = 1


class DataError(GeochemadError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    """A required CSV column is missing."""

    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")


class RowError(DataError):
    """A CSV row could not be parsed; ``line`` is 1-based and counts the header."""

    def __init__(self, line, message, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line}: {message}")


class ValidationError(DataError):
    pass


class EmptySurveyError(DataError):
    pass


class DomainError(DataError):
    """Input outside a transform's domain (e.g. nonpositive entry for a log-ratio)."""


class SelectionError(ConfigError):
    pass


class FitError(DataError):
    pass


class EvaluationError(DataError):
    pass


class NumericError(GeochemadError, ArithmeticError):
    exit_code = 3


class TrainingError(NumericError):
    def __init__(self, epoch, message="loss became NaN"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {message}")


class ShapeError(GeochemadError, ValueError):
    """Operand shapes are incompatible for a tensor primitive."""

    exit_code = 3

    def __init__(self, primitive, message):
        self.primitive = primitive
        super().__init__(f"{primitive}: {message}")
