"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SinkdiffError(Exception):
    """Base class for all library errors."""


class ValidationError(SinkdiffError, ValueError):
    """Input data violates a structural invariant.

    ``field`` names the offending field when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DomainError(SinkdiffError, ValueError):
    """A parametrization was evaluated outside of its domain."""


class NumericalError(SinkdiffError, ArithmeticError):
    """Base class for failures of the floating point computation itself."""


class KernelUnderflowError(NumericalError):
    """The explicit Gibbs kernel (or a product with it) left the float range."""


class SpectralDegeneracyError(NumericalError):
    """The fixed-point Jacobian does not have a simple unit eigenvalue."""


class ConditioningError(NumericalError):
    """A dense linear solve was numerically singular."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class OracleError(NumericalError):
    """A finite-difference oracle could not produce a trustworthy value."""
