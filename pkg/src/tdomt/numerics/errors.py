class NumericsError(Exception):
    """Base class for tensor-layer failures."""


class DimensionError(NumericsError, ValueError):
    pass


class DomainError(NumericsError, ValueError):
    pass


class TapeError(NumericsError, RuntimeError):
    pass


class ConvergenceError(NumericsError, ArithmeticError):
    pass
