"""Dense linear algebra for small symmetric positive-definite systems.

Everything in this package that touches a precision matrix goes through the
Cholesky route below: factor once, then reuse the factor for log-determinants
and solves.  Matrices are plain row-major ``numpy`` arrays; problem sizes are
tiny (tens of rows), so no sparse or blocked code paths exist.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "CholeskyFactor",
    "DimensionMismatch",
    "NotPositiveDefinite",
    "cholesky",
    "chol_spd",
    "logdet_pd",
    "solve_pd",
]


class NotPositiveDefinite(np.linalg.LinAlgError):
    """The matrix has a non-positive pivot and cannot be factored."""


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible."""


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with A = L @ L.T."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def cholesky(a: np.ndarray, jitter: float = 0.0) -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix as L @ L.T.

    Args:
        a: square symmetric matrix (symmetric within 1e-10 relative tolerance).
        jitter: nonnegative value added to the diagonal before factoring.

    Raises:
        DimensionMismatch: if ``a`` is not square.
        ValueError: if ``a`` is not numerically symmetric.
        NotPositiveDefinite: if the jittered matrix is not positive definite.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = np.abs(a).max() if a.size else 0.0
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * (1.0 + scale):
        raise ValueError("matrix is not symmetric within tolerance")
    if jitter != 0.0:
        a = a + jitter * np.eye(a.shape[0])
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from err
    return CholeskyFactor(lower)


def chol_spd(a: np.ndarray) -> CholeskyFactor:
    """Factor with an escalating jitter ladder as a fallback.

    The first attempt uses no jitter so that factorizations stay consistent
    across code paths that are compared to each other at tight tolerances.
    Near-singular matrices (a log-det regularizer can drive the feature gram
    close to rank deficiency) get diagonal jitter scaled by trace/dim.
    """
    a = np.asarray(a, dtype=float)
    base = max(np.trace(a) / max(a.shape[0], 1), 1e-30)
    jitter = 0.0
    for _ in range(8):
        try:
            return cholesky(a, jitter=jitter)
        except NotPositiveDefinite:
            jitter = base * 1e-12 if jitter == 0.0 else jitter * 100.0
    raise NotPositiveDefinite("matrix not positive definite even with jitter")


def logdet_pd(factor: CholeskyFactor) -> float:
    """Log-determinant of the factored matrix: 2 * sum(log(diag(L)))."""
    return float(2.0 * np.sum(np.log(np.diag(factor.lower))))


def solve_pd(factor: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve A @ x = b given the Cholesky factor of A.

    ``b`` may be a vector or a matrix of right-hand-side columns.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.dim:
        raise DimensionMismatch(
            f"factor dim {factor.dim} does not match rhs rows {b.shape[0]}"
        )
    y = solve_triangular(factor.lower, b, lower=True)
    return solve_triangular(factor.lower.T, y, lower=False)
