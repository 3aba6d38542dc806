"""Exception types shared across the package.

The CLI maps these onto process exit codes (see cli.py): config problems
exit 2, numeric failures exit 3, invalid input data exit 4.
"""


class StyleAdaptError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(StyleAdaptError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class NumericFailureError(StyleAdaptError, ArithmeticError):
    """A computation produced or detected non-finite / degenerate numbers."""


class ConfigError(StyleAdaptError):
    """A run configuration is inconsistent or references missing inputs."""


class UndefinedMetricError(StyleAdaptError):
    """A metric has no defined value for the given inputs."""
