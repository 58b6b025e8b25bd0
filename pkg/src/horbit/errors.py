"""Exception hierarchy shared by every module."""


class HorbitError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(HorbitError, ValueError):
    """Input violates a documented precondition."""


class NumericOverflowError(HorbitError, ArithmeticError):
    """A decomposition hit a (near) singular factor."""


class InternalConsistencyError(HorbitError, RuntimeError):
    """A built-in self check disagreed with its closed form."""


class UnsupportedError(HorbitError, NotImplementedError):
    """The requested preset or configuration is outside the supported set."""


class PoisonedEstimateError(HorbitError, FloatingPointError):
    """An integrand produced NaN on some quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
