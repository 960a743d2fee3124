"""Exception types shared across modules."""


class CorruptStreamError(ValueError):
    """Encoded data is inconsistent; ``offset`` locates the first bad byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
