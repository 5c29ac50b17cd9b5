"""Exception taxonomy shared across the package."""


class UavCacheError(Exception):
    """Base class for package-specific errors."""


class ConfigError(UavCacheError):
    """Invalid configuration: bad schema, unknown keys, out-of-range values."""


class ConvergenceError(UavCacheError):
    """A numerical routine failed to meet its tolerance after bound doubling."""
