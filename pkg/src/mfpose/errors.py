class DimensionError(ValueError):
    """Raised when tensor extents are incompatible with an operation."""


class UsageError(RuntimeError):
    """Raised when an operation is called in a state it does not support."""


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration values."""


class NumericError(ArithmeticError):
    """Raised when a NaN or infinity shows up where it must not."""
