"""Exception types raised by the numerical routines."""


class OscBathError(Exception):
    """Base class for all package errors."""


class StripViolation(OscBathError, ValueError):
    pass


class QuadratureDivergence(OscBathError, ArithmeticError):
    pass


class GridMismatch(OscBathError, ValueError):
    pass


class PoleOutOfRange(OscBathError, ValueError):
    pass


class ContourPole(OscBathError, ArithmeticError):
    pass


class CutViolation(OscBathError, ValueError):
    pass


class ContourViolation(OscBathError, ValueError):
    pass


class NoConvergence(OscBathError, ArithmeticError):
    def __init__(self, message, residual=None, last=None):
        super().__init__(message)
        self.residual = residual
        self.last = last


class ReflectionViolation(OscBathError, ValueError):
    pass


class DivergentThermalNorm(OscBathError, ArithmeticError):
    pass


class NoiseFloor(OscBathError, ArithmeticError):
    pass


class ResonanceOnContour(OscBathError, ArithmeticError):
    pass


class TruncationDominates(OscBathError, ArithmeticError):
    pass


class PlateauNotReached(OscBathError, ArithmeticError):
    pass


class ConfigError(OscBathError, ValueError):
    pass
