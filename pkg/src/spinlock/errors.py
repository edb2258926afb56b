"""Exception hierarchy shared by every module."""


class SpinlockError(Exception):
    """Base class for all package errors."""


class DimensionError(SpinlockError, ValueError):
    pass


class InvalidStateError(SpinlockError, ValueError):
    pass


class NonHermitianError(SpinlockError, ValueError):
    pass


class IntegrationDiverged(SpinlockError, ArithmeticError):
    """Raised when a time step breaks trace or positivity beyond tolerance."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class NonUniqueSteadyState(SpinlockError, ArithmeticError):
    pass


class DegenerateModelError(SpinlockError, ValueError):
    """Rates or drives leave a closed-form quantity undefined."""


class NoPhasePreference(DegenerateModelError):
    pass


class ZeroContrastError(DegenerateModelError):
    pass


class ResonanceError(SpinlockError, ArithmeticError):
    """A resolvent in the effective-operator expansion is (near) singular."""

    def __init__(self, message: str, field=None, level=None):
        super().__init__(message)
        self.field = field
        self.level = level


class PartitionError(SpinlockError, ValueError):
    pass


class FitFailed(SpinlockError, RuntimeError):
    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IllConditionedDesign(SpinlockError, ValueError):
    pass


class NoCarrierError(SpinlockError, ValueError):
    pass


class ConfigError(SpinlockError, ValueError):
    """Invalid or malformed experiment configuration."""
