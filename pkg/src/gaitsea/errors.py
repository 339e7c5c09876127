"""Exception types shared across the package."""

from __future__ import annotations


class GaitSeaError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GaitSeaError, ValueError):
    pass


class ParseError(GaitSeaError, ValueError):
    """Raised when a text file does not match its schema."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class FormatError(GaitSeaError, ValueError):
    """Raised when a binary weights file fails one of its integrity checks."""

    def __init__(self, check: str, message: str):
        self.check = check
        super().__init__(f"{check}: {message}")


class DegenerateChannelError(GaitSeaError, ValueError):
    pass


class DegenerateSampleError(GaitSeaError, ValueError):
    pass


class NumericFailureError(GaitSeaError, ArithmeticError):
    def __init__(self, time: float, message: str = "non-finite state"):
        self.time = time
        super().__init__(f"{message} at t={time:.6g} s")
