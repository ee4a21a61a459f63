"""Exception hierarchy shared by every module of the package."""


class ISACError(Exception):
    """Base class for all package errors."""


class ConfigError(ISACError, ValueError):
    """Invalid configuration or domain type construction."""


class QuadratureError(ISACError, ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy.

    The last two estimates are kept so callers can decide whether the
    result is still usable.
    """

    def __init__(self, message, previous=None, current=None):
        super().__init__(message)
        self.previous = previous
        self.current = current


class LinAlgError(ISACError, ArithmeticError):
    """Dense linear-algebra precondition failure (non-Hermitian, singular...)."""


class InfeasibleError(ISACError):
    """The rate target exceeds the channel capacity."""

    def __init__(self, message, r_max=None, rbar=None):
        super().__init__(message)
        self.r_max = r_max
        self.rbar = rbar


class SolverError(ISACError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, residual=None, last=None):
        super().__init__(message)
        self.residual = residual
        self.last = last


class UnboundedError(ISACError, ArithmeticError):
    """A bound is infinite (no information about the angle)."""
