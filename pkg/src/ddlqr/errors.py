"""Exception hierarchy for the ddlqr package."""


class DdlqrError(Exception):
    """Base class for all ddlqr errors."""


class DimensionError(DdlqrError, ValueError):
    """Inputs have inconsistent or invalid dimensions."""


class DataFormatError(DdlqrError, ValueError):
    """A system/weights/data file could not be parsed.

    Carries the offending line number (1-based) when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(prefix + message)
        self.path = path
        self.line = line


class NumericalError(DdlqrError):
    """A numerical routine failed (eigensolver breakdown, non-convergence, ...)."""


class ConvergenceError(NumericalError):
    """An iterative solver did not converge within its iteration budget."""


class SingularRegressorError(NumericalError):
    """The Q-learning regressor is numerically singular.

    This signals loss of persistent excitation, a destabilizing policy, or
    (with noisy data) violation of the linear-independence assumption.
    The optional ``iteration`` attribute records when it happened.
    """

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ImprovementError(NumericalError):
    """The input-input block of a Q-function kernel is not invertible."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class RankDeficientError(NumericalError):
    """A data matrix that must have full row rank does not."""


class ControllabilityError(DdlqrError):
    """A matrix pair that must be controllable is not."""


class StructureError(DdlqrError):
    """A matrix does not have the structure required by the operation."""


class UnsupportedInstanceError(DdlqrError):
    """The problem instance is degenerate in a way the method does not cover."""
