"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DreamError(Exception):
    exit_code = 1


class ConfigError(DreamError, ValueError):
    exit_code = 1


class DataError(DreamError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class EmptyDatasetError(DataError):
    pass


class DimensionError(DataError):
    pass


class GraphError(DreamError, RuntimeError):
    """Raised for misuse of the gradient tape (internal error)."""

    exit_code = 3


class NumericError(DreamError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term
