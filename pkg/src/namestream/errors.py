"""Error taxonomy shared across the package.

Each error class carries the process exit code the CLI maps it to, so
command handlers can stay free of error-translation tables.
"""


class NamestreamError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(NamestreamError):
    """Invalid usage or configuration (bad flag values, missing paths)."""

    exit_code = 2


class DataError(NamestreamError):
    """Malformed, inconsistent, or unreadable input data."""

    exit_code = 3


class NumericalError(NamestreamError):
    """Numerical failure that no amount of retrying will fix."""

    exit_code = 4


class DegeneracyError(NumericalError):
    """All particle weights underflowed to zero."""
