"""Exception and warning types raised across the package."""


class OrdinalDPDError(Exception):
    """Base class for all package errors."""


class InvalidTheta(OrdinalDPDError, ValueError):
    """Cut-offs not strictly increasing, or dimensions inconsistent."""


class InvalidData(OrdinalDPDError, ValueError):
    """Dataset violates its invariants (labels out of range, non-finite X, ...)."""


class DegenerateProbability(OrdinalDPDError, ArithmeticError):
    """An observed-category probability fell below the underflow threshold."""


class SingularPsi(OrdinalDPDError, ArithmeticError):
    """The Psi matrix is too ill-conditioned to invert."""


class SingularScatter(OrdinalDPDError, ValueError):
    """A covariate has zero median absolute deviation."""


class ZeroMadColumn(OrdinalDPDError, ValueError):
    """Standardization requested on a column whose MAD is zero."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero median absolute deviation")


class ExactTooLarge(OrdinalDPDError, ValueError):
    """Exact GES enumeration requested beyond the m**n cap."""


class InsufficientLowPredictor(OrdinalDPDError, RuntimeWarning):
    """Too few low-predictor rows for targeted vertical contamination."""


class NoConvergence(OrdinalDPDError, RuntimeError):
    """Optimizer stopped before reaching the gradient tolerance.

    The best iterate found is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConvergenceWarning(RuntimeWarning):
    pass


class EmptyCategoryWarning(RuntimeWarning):
    pass
