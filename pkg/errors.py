"""
errors.py

Exception hierarchy shared by every MarketSense module.
"""

from typing import Optional


class MarketSenseError(Exception):
    """Base class for every error raised on purpose by this project."""


class InsufficientDataError(MarketSenseError, ValueError):
    pass


class InsufficientHistoryError(InsufficientDataError):
    pass


class InvalidReturnError(MarketSenseError, ValueError):
    pass


class InvalidNumberError(MarketSenseError, ValueError):
    pass


class InvalidInputError(MarketSenseError, ValueError):
    pass


class InvalidArgumentError(MarketSenseError, ValueError):
    pass


class InvalidContextError(InvalidInputError):
    pass


class EmptyInputError(InvalidInputError):
    pass


class ShapeError(MarketSenseError, ValueError):
    pass


class UndefinedSimilarityError(MarketSenseError, ValueError):
    pass


class UndefinedRatioError(MarketSenseError, ValueError):
    pass


class AlignmentError(MarketSenseError, ValueError):
    pass


class RangeError(MarketSenseError, ValueError):
    pass


class ConfigurationError(MarketSenseError, ValueError):
    pass


class IntegrityError(MarketSenseError, ValueError):
    pass


class NotFoundError(MarketSenseError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message
        return str(self.args[0]) if self.args else ""


class ValidationError(MarketSenseError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(MarketSenseError, ValueError):
    """Raised when an LLM completion cannot be parsed; keeps the raw text."""

    def __init__(self, message: str, raw: str = "", line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.raw = raw
        self.line = line


class RankingError(ParseError):
    pass


class TransientLLMError(MarketSenseError):
    """A provider failure worth retrying (timeouts, 429, 5xx)."""


class TransportError(MarketSenseError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts



class NothingToReportError(MarketSenseError):
    """No earlier run left outputs to report on."""


__all__ = [
    "MarketSenseError",
    "InsufficientDataError",
    "InsufficientHistoryError",
    "InvalidReturnError",
    "InvalidNumberError",
    "InvalidInputError",
    "InvalidArgumentError",
    "InvalidContextError",
    "EmptyInputError",
    "ShapeError",
    "UndefinedSimilarityError",
    "UndefinedRatioError",
    "AlignmentError",
    "RangeError",
    "ConfigurationError",
    "IntegrityError",
    "NotFoundError",
    "ValidationError",
    "ParseError",
    "RankingError",
    "TransientLLMError",
    "TransportError",
    "NothingToReportError",
]
