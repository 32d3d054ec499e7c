"""Exception types shared across the package."""


class BigWinnersError(Exception):
    """Base class for all package errors."""


class ParameterError(BigWinnersError, ValueError):
    """A distribution or model parameter is outside its domain."""


class InsufficientDataError(BigWinnersError, ValueError):
    """Too few observations for the requested operation."""


class DataError(BigWinnersError, ValueError):
    """Input data violates a structural requirement (bad price, duplicate row)."""


class ParseError(DataError):
    """A record in an input file could not be parsed.

    Carries the 1-based line number of the offending row.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FitFailureError(BigWinnersError, RuntimeError):
    """A distribution fit or regression did not converge.

    ``iterations`` holds how many optimizer steps ran before giving up.
    """

    def __init__(self, message: str, iterations: int | None = None):
        if iterations is not None:
            message = f"{message} (after {iterations} iterations)"
        super().__init__(message)
        self.iterations = iterations
