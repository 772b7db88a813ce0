"""Exception types raised across the package."""


class UFTError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(UFTError, ValueError):
    pass


class ShapeMismatch(UFTError, ValueError):
    pass


class ZeroNormFeature(UFTError, ValueError):
    """A feature row has (numerically) zero norm."""


class InvalidMass(UFTError, ValueError):
    pass


class UnbalancedInput(UFTError, ValueError):
    """Balanced solve requested for masses with different totals."""


class NonFiniteDual(UFTError, FloatingPointError):
    """A dual potential left the finite range; eta is too small for the cost scale."""


class NegativePlanEntry(UFTError, ValueError):
    pass


class TooLarge(UFTError, ValueError):
    pass


class Diverged(UFTError, RuntimeError):
    pass


class UnsupportedScale(UFTError, ValueError):
    pass


class ResolutionMismatch(UFTError, ValueError):
    pass


class TooFewChannels(UFTError, ValueError):
    pass


class EmptyRow(UFTError, ValueError):
    pass


class LengthMismatch(UFTError, ValueError):
    pass


class InvalidSpec(UFTError, ValueError):
    pass


class NotSquare(UFTError, ValueError):
    pass


class TensorFormatError(UFTError, ValueError):
    pass
