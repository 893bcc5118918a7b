"""Exception hierarchy.

Every failure raised by the library derives from :class:`CPWError` so callers
(the CLI in particular) can map library errors to exit codes in one place.
Numerical failures derive from :class:`NumericalError`; bad inputs derive from
:class:`ValueError` as well, so ``except ValueError`` keeps working.
"""


class CPWError(Exception):
    pass


class NumericalError(CPWError):
    """Iterative or numerical procedure failed."""


class InputError(CPWError, ValueError):
    """Input violates a documented precondition."""


# xsection
class NonConvergence(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateGeometry(InputError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class AsymmetryTooLarge(NumericalError):
    pass


class DimensionMismatch(InputError):
    pass


# mtl
class IdentityViolated(InputError):
    pass


class SingularC(InputError):
    pass


class KappaOutOfRange(InputError):
    pass


# netsolver
class ExactSingular(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class WrongBasin(NumericalError):
    def __init__(self, message, f_p=None):
        super().__init__(message)
        self.f_p = f_p


class OnPole(NumericalError):
    pass


# perturb
class CaseUnsupported(InputError):
    pass


class NotMatched(InputError):
    pass


class DerivativeDegenerate(NumericalError):
    pass


# resfit
class InsufficientSpan(InputError):
    pass


class NoDip(InputError):
    pass


class Divergence(NumericalError):
    pass


# cli / config
class ConfigError(InputError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
