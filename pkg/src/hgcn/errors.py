"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand or record shapes are incompatible."""


class FormatError(ValueError):
    """A binary file does not follow its declared layout."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset
