"""Exception hierarchy shared by every module."""


class GpnError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GpnError, ValueError):
    """Arguments outside an operation's domain."""


class NumericalError(GpnError, ArithmeticError):
    """Base class for failures of the numerics rather than of the caller."""


class DegenerateEllipseError(NumericalError):
    """An ellipse semi-axis is non-positive or below the geometry floor."""


class DegenerateCovarianceError(NumericalError):
    """A covariance matrix is singular, indefinite or asymmetric."""


class OptimizationDiverged(NumericalError):
    """Gradient descent blew up. The partial trace is kept on ``trace``."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
