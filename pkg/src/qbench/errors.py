"""Exception hierarchy shared across the package."""


class QBenchError(Exception):
    """Base class for every error raised by qbench."""


class InputError(QBenchError, ValueError):
    """Malformed or out-of-range user input."""


class DimensionError(InputError):
    """Operands whose Hilbert-space dimensions do not line up."""


class HermiticityError(InputError):
    """Operator expected to be Hermitian is not, beyond tolerance."""


class NumericalBudgetError(QBenchError, ArithmeticError):
    """A numerical error budget (truncation, quadrature) was exceeded."""


class TruncationError(NumericalBudgetError):
    """The Fock cutoff is too small for the requested accuracy.

    ``min_dim`` carries the smallest cutoff that would have been adequate,
    or ``None`` when it could not be determined.
    """

    def __init__(self, message, min_dim=None):
        super().__init__(message)
        self.min_dim = min_dim


class QuadratureError(NumericalBudgetError):
    """Quadrature did not resolve the integrand to the requested tolerance."""

    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)
