"""Exception types shared across the toolkit."""


class NeveError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(NeveError, ValueError):
    """Invalid configuration; the message names the offending field(s)."""


class DataFormatError(NeveError, ValueError):
    """Malformed dataset file (bad magic, truncation, length mismatch)."""


class NumericError(NeveError, ArithmeticError):
    """Non-finite value produced by the engine; the message names the source."""
