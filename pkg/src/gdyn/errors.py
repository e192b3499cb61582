"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError`; validation problems
derive from :class:`ValidationError`. The CLI maps these to exit codes 2 and 1.
"""


class GdynError(Exception):
    """Base class for all package errors."""


class ValidationError(GdynError, ValueError):
    """Bad input or configuration."""


class NumericalError(GdynError, ArithmeticError):
    """A computation could not be carried out to the requested accuracy."""


class NonFinite(ValidationError):
    pass


class DegenerateSpectrum(NumericalError):
    pass


class SingularOverlap(NumericalError):
    pass


class GapCollapse(NumericalError):
    """Two eigenvalues came closer than the gap floor during a step."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class PoleCollision(NumericalError):
    pass


class QuadratureNonConverged(NumericalError):
    pass


class TruncationError(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class RegulatorTooSmall(NumericalError):
    pass


class GridMismatch(ValidationError):
    pass


class EmptyWindow(UserWarning):
    """Warning category: no sample fell inside the histogram window."""
