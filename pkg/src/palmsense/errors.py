"""Exception types raised across the package."""

from __future__ import annotations


class PalmSenseError(Exception):
    """Base class for all package errors."""


class ChannelOutOfRange(PalmSenseError, ValueError):
    pass


class InsufficientData(PalmSenseError, ValueError):
    pass


class DegenerateComponent(PalmSenseError, RuntimeError):
    pass


class SingularInputCovariance(PalmSenseError, ArithmeticError):
    pass


class LengthMismatch(PalmSenseError, ValueError):
    pass


class PositionOutOfBoard(PalmSenseError, ValueError):
    pass


class VersionMismatch(PalmSenseError, ValueError):
    pass


class FormatError(PalmSenseError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
