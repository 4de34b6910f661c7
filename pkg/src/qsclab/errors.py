"""Exception types shared across the package."""


class QscError(Exception):
    """Base class for all package errors."""


class ExprError(QscError):
    """Raised when an expression cannot be parsed or evaluated."""


class SpecError(QscError):
    """Raised for malformed space, connection or run configurations."""


class ChartError(QscError):
    """Raised when a point falls outside the valid coordinate chart."""


class DomainError(QscError):
    """Raised when an input lies outside the domain of an operation."""


class FrameError(QscError):
    """Raised when a frame is not orthonormal for the given metric."""


class NotStated(QscError):
    """Raised when no closed-form item covers a slot combination."""
