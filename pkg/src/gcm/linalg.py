"""Dense real matrix primitives used by the estimators.

Orthogonal projectors, the Moore-Penrose inverse, Kronecker products, the
row-stacking vec operator and symmetric-positive-definite factorizations.
All functions are pure and operate on float64 arrays; NaN/Inf entries are
rejected at entry.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotSpd, RankDeficient

# Relative cutoffs on singular/eigenvalues. RANK_RTOL is the double-precision
# cliff below which a column is treated as dependent; PINV_RTOL is the
# truncation threshold of the pseudo-inverse.
RANK_RTOL = 1e-10
PINV_RTOL = 1e-12
SYM_RTOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-d float64 array or raise ValueError."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={out.ndim}")
    if out.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return out


def check_spd(a, name: str = "matrix") -> np.ndarray:
    """Validate that ``a`` is symmetric positive definite at working precision.

    Symmetry is checked relative to the largest entry magnitude and positive
    definiteness requires the smallest eigenvalue to exceed ``RANK_RTOL``
    times the largest. Returns the validated array.
    """
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise NotSpd(f"{name} is not square: shape {a.shape}")
    scale = float(np.abs(a).max())
    if scale == 0.0:
        raise NotSpd(f"{name} is identically zero")
    if float(np.abs(a - a.T).max()) > SYM_RTOL * scale:
        raise NotSpd(f"{name} is not symmetric at relative tolerance {SYM_RTOL:g}")
    w = np.linalg.eigvalsh(a)
    if w[-1] <= 0.0 or w[0] <= RANK_RTOL * w[-1]:
        raise NotSpd(
            f"{name} is not positive definite: eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}]"
        )
    return a


def solve_spd(a: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a`` via Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NotSpd(f"{name} has no Cholesky factorization: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def inv_spd(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Explicit inverse of a symmetric positive definite matrix, symmetrized."""
    inv = solve_spd(a, np.eye(a.shape[0]), name)
    return (inv + inv.T) / 2.0


def orth_projector(a) -> np.ndarray:
    """Orthogonal projector onto the column space of ``a``.

    Returns P = A (A'A)^{-1} A', symmetric and idempotent with
    trace equal to the column count. Raises RankDeficient when the smallest
    singular value falls below ``RANK_RTOL`` times the largest.
    """
    a = as_matrix(a, "projector input")
    n, k = a.shape
    if k > n:
        raise RankDeficient(f"cannot project onto {k} columns in {n}-dimensional space")
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"matrix is rank deficient: singular values in [{s[-1]:.3e}, {s[0]:.3e}]"
        )
    p = a @ solve_spd(a.T @ a, a.T, "Gram matrix")
    return (p + p.T) / 2.0


def moore_penrose(a) -> np.ndarray:
    """Moore-Penrose inverse via SVD with relative truncation ``PINV_RTOL``."""
    a = as_matrix(a, "pseudo-inverse input")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > PINV_RTOL * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def kron(a, b) -> np.ndarray:
    """Kronecker product with block (i, j) equal to a[i, j] * b."""
    a = as_matrix(a, "kron left factor")
    b = as_matrix(b, "kron right factor")
    return np.kron(a, b)


def vec_t(a) -> np.ndarray:
    """Row-stacking vec: the rows of ``a`` concatenated in order.

    Equals the column-stacking vec of the transpose, which is the
    orientation all Kronecker-factored covariances in this package use.
    """
    a = as_matrix(a, "vec input")
    return a.reshape(-1)


def inv_sqrt_spd(a) -> np.ndarray:
    """Symmetric positive definite B with B A B = I, via spectral decomposition."""
    a = check_spd(a, "inverse square root input")
    w, v = np.linalg.eigh(a)
    b = (v / np.sqrt(w)) @ v.T
    return (b + b.T) / 2.0
