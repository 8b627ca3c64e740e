"""Exception hierarchy."""


class NetpostError(Exception):
    """Base class for all package errors."""


class ConfigError(NetpostError, ValueError):
    """Invalid configuration or arguments."""


class DataError(NetpostError, ValueError):
    """Malformed or inconsistent input data."""


class DomainError(NetpostError, ValueError):
    """A value lies outside the domain of a model (e.g. non-PD precision)."""


class NumericalError(NetpostError, RuntimeError):
    """A numerical procedure failed (e.g. BLI could not bracket a maximum)."""


class ConsistencyError(NetpostError, RuntimeError):
    """Internal bookkeeping does not match its definition."""
