"""Exception types shared across the package."""


class VoimcError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(VoimcError, ValueError):
    """Invalid model name, configuration file, or partition."""


class CapabilityError(VoimcError, RuntimeError):
    """Operation requested from a model that does not support it."""


class InsufficientDataError(VoimcError, ValueError):
    """Too few usable data points for the requested fit."""
