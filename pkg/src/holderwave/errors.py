"""Exception types raised across the package."""


class HolderWaveError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HolderWaveError, ValueError):
    pass


class DimensionMismatch(HolderWaveError, ValueError):
    pass


class UnsupportedModel(HolderWaveError):
    pass


class SingularityError(HolderWaveError, ArithmeticError):
    pass


class DegeneracyError(HolderWaveError, ArithmeticError):
    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class DomainEscape(HolderWaveError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class DivergenceError(HolderWaveError):
    def __init__(self, message, ratios=None):
        super().__init__(message)
        self.ratios = list(ratios or [])


class InfeasibleError(HolderWaveError):
    pass


class HorizonMismatch(HolderWaveError, ValueError):
    pass


class DriftEvaluationError(HolderWaveError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
