"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Array/tensor dimensions do not match what an operation requires."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite intermediate or result."""


class DomainError(ValueError):
    """An argument is outside the operation's valid domain."""


class ValidationError(ValueError):
    """A manifest or record violates a structural invariant."""


class ManifestParseError(ValueError):
    """A manifest line could not be parsed; carries the line number."""

    def __init__(self, line_no: int | None, message: str):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
