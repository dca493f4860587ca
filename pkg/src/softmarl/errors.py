"""Exception hierarchy shared across the toolkit."""


class SoftMarlError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SoftMarlError, ValueError):
    pass


class ShapeError(SoftMarlError, ValueError):
    pass


class NumericError(SoftMarlError, FloatingPointError):
    pass


class ConsistencyError(SoftMarlError, ValueError):
    pass


class DomainError(SoftMarlError, ValueError):
    pass


class InsufficientDataError(SoftMarlError):
    """Raised when the replay buffer holds fewer transitions than requested."""


class SizeError(SoftMarlError):
    """Raised when an exact enumeration would exceed its budget."""
