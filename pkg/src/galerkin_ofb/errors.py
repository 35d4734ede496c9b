"""Exception and warning types raised across the package."""


class GalerkinOFBError(Exception):
    """Base class for all package errors."""


class DegenerateDomain(GalerkinOFBError, ValueError):
    pass


class SingularLifting(GalerkinOFBError):
    """A lifting denominator k_i - lambda_n (or k_i + lambda_n) is numerically zero."""


class BasisTooSmall(GalerkinOFBError, ValueError):
    pass


class IllConditioned(GalerkinOFBError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class TailNotConverged(GalerkinOFBError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NotFound(GalerkinOFBError):
    """No certified controller dimension in the probed range.

    The probed margin table is attached as ``table`` for diagnosis.
    """

    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


class EnvelopeInvalid(GalerkinOFBError, ValueError):
    pass


class StepSizeUnderflow(GalerkinOFBError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NonFinite(GalerkinOFBError):
    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class DegenerateFit(GalerkinOFBError, ValueError):
    pass


class ConfigError(GalerkinOFBError, ValueError):
    pass


class AliasingRisk(UserWarning):
    """Quadrature grid is too coarse for the modal content it must resolve."""


class UncertifiedDesign(UserWarning):
    """A simulation runs with a controller whose stability condition fails."""
