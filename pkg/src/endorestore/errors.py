class RestorationError(Exception):
    """Base class for user-facing errors raised by this package."""


class DecodeError(RestorationError):
    pass


class ShapeError(RestorationError, ValueError):
    pass


class DegenerateIlluminantError(RestorationError, ValueError):
    pass


class NumericError(RestorationError, FloatingPointError):
    pass


class CheckpointFormatError(RestorationError):
    pass
