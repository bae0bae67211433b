"""Exception hierarchy.

Every library error carries a distinct process exit code so the command-line
front end can map failures one-to-one.
"""

from __future__ import annotations


class EnvelopeError(Exception):
    """Base class for all library errors."""

    exit_code = 1
    module = "envbounds"


class ConfigError(EnvelopeError):
    exit_code = 2
    module = "cli"


class EmptySample(EnvelopeError):
    exit_code = 10
    module = "core"


class OutOfSupportCode(EnvelopeError):
    exit_code = 11
    module = "core"

    def __init__(self, field: str, row: int, value=None):
        self.field = field
        self.row = row
        self.value = value
        super().__init__(f"field {field!r} at row {row} is outside the declared support: {value!r}")


class BadFoldCount(EnvelopeError):
    exit_code = 12
    module = "core"


class EmptyCell(EnvelopeError):
    exit_code = 20
    module = "first_stage"

    def __init__(self, cell: int, fold: int | None):
        self.cell = cell
        self.fold = fold
        where = "full sample" if fold is None else f"complement of fold {fold}"
        super().__init__(f"covariate cell {cell} has no observations in the {where}")


class ZeroKernelMass(EnvelopeError):
    exit_code = 21
    module = "first_stage"


class GridMismatch(EnvelopeError):
    exit_code = 22
    module = "first_stage"


class MissingNuisance(EnvelopeError):
    exit_code = 30
    module = "envelope"


class NonFiniteScore(EnvelopeError):
    exit_code = 31
    module = "envelope"

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"score is not finite at row {row}")


class BadLevel(EnvelopeError):
    exit_code = 40
    module = "cvar"


class DegenerateDenominator(EnvelopeError):
    exit_code = 50
    module = "apps"


class OverlapViolation(EnvelopeError):
    exit_code = 51
    module = "apps"


class BadGrid(EnvelopeError):
    exit_code = 52
    module = "apps"


class MissingOutcome(EnvelopeError):
    exit_code = 53
    module = "apps"


class NoSaddle(EnvelopeError):
    exit_code = 60
    module = "saddle"

    def __init__(self, message: str = "no pure saddle point on the grid", cells=()):
        self.cells = tuple(cells)
        if self.cells:
            message = f"{message}; offending covariate codes: {list(self.cells)}"
        super().__init__(message)


class UnsupportedApplication(EnvelopeError):
    exit_code = 70
    module = "simlab"


class MarginViolation(EnvelopeError):
    exit_code = 71
    module = "simlab"


ALL_ERRORS = (
    EnvelopeError,
    ConfigError,
    EmptySample,
    OutOfSupportCode,
    BadFoldCount,
    EmptyCell,
    ZeroKernelMass,
    GridMismatch,
    MissingNuisance,
    NonFiniteScore,
    BadLevel,
    DegenerateDenominator,
    OverlapViolation,
    BadGrid,
    MissingOutcome,
    NoSaddle,
    UnsupportedApplication,
    MarginViolation,
)

__all__ = ["EnvelopeError", "ConfigError", "EmptySample", "OutOfSupportCode", "BadFoldCount", "EmptyCell", "ZeroKernelMass", "GridMismatch", "MissingNuisance", "NonFiniteScore", "BadLevel", "DegenerateDenominator", "OverlapViolation", "BadGrid", "MissingOutcome", "NoSaddle", "UnsupportedApplication", "MarginViolation", "ALL_ERRORS"]
