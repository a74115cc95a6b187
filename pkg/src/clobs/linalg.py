"""Small dense linear-algebra helpers shared by the estimation pipeline.

Conventions used throughout the package:

- vectors are 1-D float ndarrays, matrices are 2-D float ndarrays;
- matrix vectorization is column-major (column stacking), which is the
  convention under which ``kron_row_block(v, n) @ vectorize(A) == A @ v``;
- the stacked parameter vector of a second-order system is
  ``[vectorize(A1), vectorize(A2), vectorize(B)]`` in that order.
"""

from __future__ import annotations

import numpy as np

SYMMETRY_TOL = 1e-10


def require_finite(arr: np.ndarray, name: str) -> np.ndarray:
    """Raise ValueError if `arr` contains NaN or Inf; returns the array."""
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def vectorize(m) -> np.ndarray:
    """Column-stack a matrix into a vector of length rows*cols.

    vectorize([[1, 3], [0, 1]]) -> [1, 0, 3, 1]
    """
    m = require_finite(m, "matrix")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m.flatten(order="F")


def unvectorize(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of `vectorize`: rebuild the rows x cols matrix."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def kron_row_block(v, n: int) -> np.ndarray:
    """Return the n x (n*len(v)) block (v kron I_n)^T.

    This is the building block of the stacked regressor rows: for any
    n x len(v) matrix A, ``kron_row_block(v, n) @ vectorize(A) == A @ v``.
    """
    v = require_finite(v, "vector")
    if v.ndim != 1:
        raise ValueError("kron_row_block expects a 1-D vector")
    # for 1-D v, np.kron(v, I_n) is exactly (v^T kron I_n) = (v kron I_n)^T
    return np.kron(v, np.eye(n))


def min_eigenvalue_symmetric(m) -> float:
    """Minimum eigenvalue of a symmetric matrix.

    The input must be square and symmetric to within SYMMETRY_TOL (relative
    to its largest entry); it is symmetrized as (m + m^T)/2 before solving
    so that round-off asymmetry cannot leak into the eigensolver.
    """
    m = require_finite(m, "matrix")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if float(np.abs(m - m.T).max()) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    sym = (m + m.T) / 2.0
    return float(np.linalg.eigvalsh(sym)[0])


def theta_split(theta, n: int, m: int):
    """Partition a stacked parameter vector into its (A1, A2, B) blocks.

    The ordering is fixed package-wide: theta = [vec(A1), vec(A2), vec(B)]
    with column-major vec, so the estimator and the observer always agree
    on which entry belongs to which matrix.
    """
    theta = np.asarray(theta, dtype=float)
    nn = n * n
    if theta.size != 2 * nn + m * n:
        raise ValueError(f"theta has length {theta.size}, expected {2 * nn + m * n}")
    a1 = theta[:nn].reshape((n, n), order="F")
    a2 = theta[nn:2 * nn].reshape((n, n), order="F")
    b = theta[2 * nn:].reshape((n, m), order="F")
    return a1, a2, b


def theta_dim(n: int, m: int) -> int:
    """Length of the stacked parameter vector: 2n^2 + mn."""
    return 2 * n * n + m * n
