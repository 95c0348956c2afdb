"""Exception hierarchy."""

from __future__ import annotations


class BreakbayesError(Exception):
    """Base class for all package errors."""


class DomainError(BreakbayesError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularDesignError(BreakbayesError, ArithmeticError):
    """The break-indexed design is rank deficient.

    Usually a regime has too few observations (or no variation in the
    shifting regressors) at the given break index.
    """

    def __init__(self, break_index: int, message: str | None = None):
        self.break_index = int(break_index)
        super().__init__(message or f"rank-deficient design at break index {break_index}")


class DegeneratePosteriorError(BreakbayesError, ArithmeticError):
    """The posterior scale is not positive (exact fit under an improper prior)."""


class DivergingArgmaxError(BreakbayesError, ArithmeticError):
    """The simulated argmax keeps hitting the boundary of the simulation window.

    The estimated jump is too small for the fixed-break limit interval to be
    informative.
    """


class IncompleteReportError(BreakbayesError, KeyError):
    """A summary needs cells that the report does not contain."""


class SchemaError(BreakbayesError, ValueError):
    """Input file does not conform to the expected layout."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ConfigError(BreakbayesError, ValueError):
    """Invalid run configuration."""


class CellAbortedError(BreakbayesError):
    """Too many replications of a simulation cell failed."""
