"""Exception hierarchy.

`ValidationError` subclasses map to CLI exit code 1, `NumericalError`
subclasses to exit code 2.
"""


class DensymError(Exception):
    """Base class for all library errors."""


class ValidationError(DensymError):
    pass


class NumericalError(DensymError):
    pass


class InvalidModel(ValidationError):
    pass


class DegenerateSigma(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ExpressionError(ValidationError):
    pass


class StepTooLarge(ValidationError):
    pass


class SupportEscape(ValidationError):
    pass


class GridTooCoarse(ValidationError):
    pass


class CFLViolation(ValidationError):
    pass


class DegenerateSamples(ValidationError):
    pass


class NonFiniteCoefficient(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class LinearSolveFailure(NumericalError):
    pass


class OverflowGuard(NumericalError):
    pass


class NegativeDensity(NumericalError):
    pass


class ExpmFailure(NumericalError):
    pass


class BoundaryMassWarning(UserWarning):
    pass
