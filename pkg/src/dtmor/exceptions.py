"""Exception hierarchy shared across the toolkit.

The CLI maps these onto distinct exit codes, so keep the split between
configuration problems, solver failures, and I/O failures intact.
"""


class ModelReductionError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(ModelReductionError, ValueError):
    """Matrix dimensions are inconsistent with the system contract."""


class SingularMassMatrixError(ModelReductionError):
    """The mass matrix M could not be factorized (numerically singular)."""


class DenseCapError(ModelReductionError):
    """A dense operation was requested beyond the configured size cap."""


class SolvabilityError(ModelReductionError):
    """A Stein/Sylvester equation has no unique solution (reciprocal
    eigenvalue pair) or requires stability it does not have."""


class ConvergenceError(ModelReductionError):
    """An iterative solver hit its iteration cap above tolerance."""


class BreakdownError(ModelReductionError):
    """A Krylov basis expansion broke down beyond recoverable deflation."""


class BalancingError(ModelReductionError):
    """Balancing failed (singular Gramian product or failed verification)."""


class EstimationError(ModelReductionError):
    """A constant/norm estimator could not produce a usable value
    (e.g. eigenvector-based constants for a non-diagonalizable matrix)."""


class SystemIOError(ModelReductionError):
    """System serialization failed: missing files, malformed Matrix Market
    data, or manifest/matrix disagreement."""
