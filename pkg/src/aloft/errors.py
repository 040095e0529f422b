"""Exception types shared across the package."""


class AloftError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AloftError, ValueError):
    """An argument or input violates a documented precondition."""


class DimensionError(ValidationError):
    """Two tensors (or a tensor and a config) have incompatible shapes."""


class NumericError(AloftError, ArithmeticError):
    """A computation produced NaN or Inf."""


class ParseError(ValidationError):
    """A byte stream could not be decoded; ``offset`` locates the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.message = message
        self.offset = offset
