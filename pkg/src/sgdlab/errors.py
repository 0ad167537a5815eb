"""Exception hierarchy shared by every module."""


class SgdLabError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(SgdLabError, ValueError):
    pass


class UnidentifiableStructureError(ParameterDomainError):
    pass


class ShapeError(SgdLabError, ValueError):
    pass


class SamplingError(SgdLabError, ValueError):
    pass


class ConfigurationError(SgdLabError, ValueError):
    pass


class RangeError(SgdLabError, ValueError):
    pass


class SingularityError(ParameterDomainError):
    pass


class InsufficientSampleError(SgdLabError, ValueError):
    pass


class DivergenceError(SgdLabError, ArithmeticError):
    """Raised when an iterate or solver state blows up.

    ``step`` is the index at which the blow-up was detected (checks run
    every few dozen steps and at the final step).
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ReplicateError(SgdLabError, RuntimeError):
    def __init__(self, message, replicate):
        super().__init__(message)
        self.replicate = replicate


class UsageError(SgdLabError, ValueError):
    pass
