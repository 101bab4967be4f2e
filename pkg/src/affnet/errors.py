"""Exception hierarchy shared by every module in the package."""


class AffError(Exception):
    """Base class for all package errors."""


class ShapeError(AffError, ValueError):
    pass


class AxisError(AffError, ValueError):
    pass


class NonFiniteError(AffError, FloatingPointError):
    """Raised when an operation would hand back NaN or Inf."""


class PlanError(AffError, ValueError):
    """FFT fast path asked for a non-power-of-two size."""


class RankError(AffError, ValueError):
    pass


class DeterminismError(AffError, RuntimeError):
    pass


class ConfigError(AffError, ValueError):
    pass


class SizeError(AffError, ValueError):
    """A fixed-size operator was given an input of another spatial size."""


class FormatError(AffError, ValueError):
    """Malformed file on disk (dataset record, checkpoint, config)."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class AgreementError(AffError, RuntimeError):
    """Two implementations that must agree numerically did not."""


class TrainingDiverged(AffError, RuntimeError):
    pass
