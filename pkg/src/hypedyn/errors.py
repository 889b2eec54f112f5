"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class HypeDynError(Exception):
    """Base class for all package errors."""


class ValidationError(HypeDynError, ValueError):
    """Input violates a documented precondition (CLI exit code 1)."""


class NumericalError(HypeDynError, ArithmeticError):
    """A computation could not produce a trustworthy result (CLI exit code 2)."""


class BoundaryCaseError(NumericalError):
    """An eigenvalue modulus lies within tolerance of the unit circle."""

    def __init__(self, message, moduli=None):
        super().__init__(message)
        self.moduli = moduli


class RankDeficiencyError(NumericalError):
    """Design matrix is not of full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)
