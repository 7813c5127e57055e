"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4 (plain ValueError from library
validation is treated as a data error).
"""


class ConfigError(Exception):
    """Invalid configuration value or malformed config file."""


class DataError(Exception):
    """Unreadable, malformed, or corrupted input data."""


class NumericError(Exception):
    """Numerical failure: non-finite loss, unreachable calibration target."""
