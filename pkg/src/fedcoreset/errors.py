"""Shared exception types."""


class DomainError(ValueError):
    """A precondition on an operation's inputs was violated."""


class ParseError(ValueError):
    """Malformed input file; carries the offending row when known."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class NumericError(ArithmeticError):
    """A non-finite value appeared in a numeric computation."""


class ValidationError(ValueError):
    """An experiment configuration failed validation before execution."""
