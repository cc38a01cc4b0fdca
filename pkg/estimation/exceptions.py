class EstimationError(Exception):
    """Base class for every error raised by penaltylab."""


class InputError(EstimationError, ValueError):
    """A precondition or domain violation in user-supplied input."""


class ParseError(InputError):
    """Malformed data file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(EstimationError, ArithmeticError):
    """Non-finite gradient or objective encountered during a fit."""
