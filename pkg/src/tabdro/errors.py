"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class TabdroError(Exception):
    pass


class ConfigError(TabdroError):
    """Invalid configuration or usage."""


class DataError(TabdroError):
    """Malformed or degenerate input data."""


class NumericError(TabdroError):
    """Numeric failure during training or evaluation (non-finite values)."""
