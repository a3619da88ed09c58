"""Dense float64 linear algebra used throughout the package.

Matrices are plain 2-D ``numpy.ndarray`` objects.  The routines here add the
checks the rest of the code relies on (shape agreement, a fixed Cholesky pivot
threshold, symmetric eigendecomposition by cyclic Jacobi rotations).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .errors import DimensionError, NotPositiveDefinite, NotSymmetric

PIVOT_THRESHOLD = 1e-12
SYMMETRY_TOL = 1e-10


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


@dataclass(frozen=True)
class SymmetricFactor:
    """Lower-triangular ``L`` with ``L @ L.T`` equal to the factored matrix."""

    L: np.ndarray

    @property
    def dimension(self) -> int:
        return self.L.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.L @ self.L.T


def cholesky(a) -> SymmetricFactor:
    """Factor a symmetric positive definite matrix.

    A pivot at or below ``1e-12 * max(1, max|diag(a)|)`` raises
    :class:`NotPositiveDefinite`; callers use that to detect rank-deficient
    Gram matrices.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"cholesky needs a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(np.diag(a)))) if a.size else 1.0)
    L, bad = _kernels.cholesky_kernel(np.ascontiguousarray(a), PIVOT_THRESHOLD * scale)
    if bad >= 0:
        raise NotPositiveDefinite(f"non-positive pivot at column {bad}", column=int(bad))
    return SymmetricFactor(L)


def solve_with_factor(f: SymmetricFactor, b) -> np.ndarray:
    b_arr = np.asarray(b, dtype=np.float64)
    if b_arr.shape[0] != f.dimension:
        raise DimensionError(f"factor has dimension {f.dimension}, rhs has {b_arr.shape[0]} rows")
    z = solve_triangular(f.L, b_arr, lower=True, check_finite=False)
    return solve_triangular(f.L.T, z, lower=False, check_finite=False)


def sym_eig(s, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``s @ V == V @ diag(w)`` and orthonormal ``V``.
    """
    s = as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got {s.shape}")
    scale = max(1.0, float(np.max(np.abs(s))) if s.size else 1.0)
    if s.size and float(np.max(np.abs(s - s.T))) > SYMMETRY_TOL * scale:
        raise NotSymmetric("input matrix is not symmetric")
    sym = 0.5 * (s + s.T)
    w, V, _ = _kernels.jacobi_kernel(np.ascontiguousarray(sym), tol, max_sweeps)
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def min_eigenvalue(s) -> float:
    w, _ = sym_eig(s)
    return float(w[-1])
