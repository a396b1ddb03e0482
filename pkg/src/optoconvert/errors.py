"""Exception hierarchy shared by all engines."""


class OptoConvertError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(OptoConvertError):
    """Steady-state fixed point (or drive calibration) did not converge."""


class Unreachable(OptoConvertError):
    """Requested effective coupling cannot be realized (e.g. G = 0)."""


class ZeroCoupling(OptoConvertError):
    pass


class InvalidModel(OptoConvertError):
    pass


class StepTooLarge(OptoConvertError):
    """Integrator step violates the accuracy guard."""


class UnphysicalState(OptoConvertError):
    """A covariance matrix violates the uncertainty relation."""


class TruncationTooSmall(OptoConvertError):
    """Fock truncation leaves too much population in the top levels."""


class PositivityLoss(OptoConvertError):
    pass


class DimensionMismatch(OptoConvertError):
    pass


class InvalidSpec(OptoConvertError):
    pass


class ReportsPartial(OptoConvertError):
    """A protocol step failed; ``diagnostics`` holds the completed steps."""

    def __init__(self, message, diagnostics=None, cause=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
        self.cause = cause
