"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or missing input data (dataset layout, CSV rows, cache files)."""


class ModelFormatError(ValueError):
    """A model file that cannot be decoded."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ArithmeticError):
    """Training produced a non-finite loss or parameter."""
