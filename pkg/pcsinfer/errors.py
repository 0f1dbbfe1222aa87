"""Exception hierarchy shared by every pcsinfer module.

Library code raises these; only the CLI turns them into exit codes.
"""
from __future__ import annotations

__all__ = [
    "PcsError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "SchemaError",
    "BadConfig",
    "BadFraction",
    "BadSd",
    "KTooLarge",
    "ConstantColumn",
    "DegenerateResponse",
    "DimensionMismatch",
    "DegenerateTruth",
    "MalformedCsv",
    "EmptySurvivors",
]


class PcsError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ConfigError(PcsError, ValueError):
    exit_code = 2


class DataError(PcsError, ValueError):
    exit_code = 3


class NumericalError(PcsError, ValueError):
    exit_code = 4


class SchemaError(ConfigError):
    """A required config field is missing or has the wrong type."""

    def __init__(self, field: str, message: str = "") -> None:
        self.field = field
        detail = message or "required field is missing"
        super().__init__(f"{field}: {detail}")


class BadConfig(ConfigError):
    pass


class BadFraction(ConfigError):
    pass


class BadSd(ConfigError):
    pass


class KTooLarge(ConfigError):
    pass


class ConstantColumn(DataError):
    def __init__(self, column: int, name: str = "") -> None:
        self.column = column
        label = f" ({name})" if name else ""
        super().__init__(f"column {column}{label} has zero variance")


class DegenerateResponse(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateTruth(DataError):
    pass


class MalformedCsv(DataError):
    pass


class EmptySurvivors(NumericalError):
    pass
