"""Exception hierarchy shared by every module."""


class UtdaError(Exception):
    """Base class for all errors raised by utda."""


class InvalidArgument(UtdaError, ValueError):
    pass


class InvalidState(UtdaError, RuntimeError):
    pass


class NumericError(UtdaError, ArithmeticError):
    """A numerical procedure failed; ``last_iterate`` holds the final state if any."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class FormatError(UtdaError, ValueError):
    """A binary file could not be parsed; ``offset`` is the failing byte position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
