"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad shapes, parameter ranges, or specs."""


class DataFormatError(ValueError):
    """Malformed or corrupted data file."""
