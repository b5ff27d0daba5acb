"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config 1, data 2, numerical 3.
"""


class FunnelOptError(Exception):
    """Base class for all package errors."""


class ConfigError(FunnelOptError):
    """Invalid configuration value or malformed config file."""


class DataError(FunnelOptError):
    """Malformed data file, exhausted schedule, or unsupported variant."""


class DimensionError(FunnelOptError):
    """Mismatched vector lengths or group structures."""


class InputError(FunnelOptError):
    """Non-finite or otherwise inadmissible numeric input."""


class DomainError(FunnelOptError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(FunnelOptError):
    """Non-finite loss or a refused step during training."""
