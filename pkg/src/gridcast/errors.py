"""Exception hierarchy shared across the package.

The benchmark CLI maps these onto distinct exit codes, so stages can
tell configuration mistakes apart from data problems and numeric
failures.
"""


class GridcastError(Exception):
    """Base class for all package errors."""


class ConfigError(GridcastError):
    """Invalid or inconsistent benchmark configuration."""


class DataError(GridcastError):
    """Input data violates a precondition (gaps, short span, bad shape)."""


class NumericError(GridcastError):
    """A numeric procedure failed (non-convergence, instability)."""
