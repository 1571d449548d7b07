"""Exception types shared across the package.

`InputError` covers malformed or inconsistent inputs, `NumericalError` covers
solver breakdowns. The CLI maps them to distinct exit codes.
"""


class EmdcalError(Exception):
    """Base class for all package errors."""


class InputError(EmdcalError, ValueError):
    """Inputs are inconsistent or outside the supported domain."""


class NumericalError(EmdcalError, ArithmeticError):
    """A numerical method failed to produce a usable answer."""


class GridMismatch(InputError):
    pass


class MassMismatch(InputError):
    pass


class NegativeDensity(InputError):
    pass


class TooLarge(InputError):
    pass


class OutOfDomain(InputError):
    pass


class ThetaOutOfRange(InputError):
    pass


class EmptyPath(InputError):
    pass


class ZeroSignal(InputError):
    pass


class NonPositiveValue(InputError):
    pass


class ResolutionMismatch(InputError):
    pass


class SingularSystem(NumericalError):
    pass


class InnerSolveFailure(NumericalError):
    pass
