"""Dense linear-algebra substrate: validated matrices and vectors, column
normalization, Gram products, pivoted-QR least squares, soft thresholding,
and the CSV wire format used by every command-line tool.

Matrices are plain ``numpy`` arrays kept in column-major (Fortran) order,
since everything downstream iterates over columns.  All public operations
validate shapes and finiteness on the way in and guarantee finite output.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, ZeroColumn

# Pivot columns with |R_kk| below this fraction of |R_11| are treated as
# rank-deficient and receive zero coefficients in least-squares solves.
RANK_TOL = 1e-10

# 17 significant digits: enough for exact float64 round-trips.
_FMT = "%.17g"


def as_matrix(a) -> np.ndarray:
    """Validate and return ``a`` as a finite 2-d float array (column-major)."""
    m = np.asfortranarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"matrix dimensions must be >= 1, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def as_vector(a) -> np.ndarray:
    """Validate and return ``a`` as a finite 1-d float array."""
    v = np.ascontiguousarray(a, dtype=float)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatch(f"expected a nonempty 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf entries")
    return v


def normalize_columns(M) -> np.ndarray:
    """Rescale every column of ``M`` to unit Euclidean norm.

    Raises ``ZeroColumn`` when a column norm is <= 1e-12; such a column is a
    degenerate sample and cannot carry direction information.
    """
    M = as_matrix(M)
    norms = np.linalg.norm(M, axis=0)
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise ZeroColumn(int(bad[0]), float(norms[bad[0]]))
    return np.asfortranarray(M / norms[np.newaxis, :])


def gram(M) -> np.ndarray:
    """Return the Gram matrix ``M.T @ M`` (symmetrized)."""
    M = as_matrix(M)
    G = M.T @ M
    return (G + G.T) / 2.0


def least_squares(M, y) -> np.ndarray:
    """Minimize ``||M b - y||_2`` by Householder QR with column pivoting.

    On rank-deficient input the pivot columns with ``|R_kk| <= RANK_TOL *
    |R_11|`` are dropped and their coefficients set to zero, which keeps
    refits on nearly-parallel columns well behaved.
    """
    M = as_matrix(M)
    y = as_vector(y)
    if M.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"matrix has {M.shape[0]} rows but vector has length {y.shape[0]}"
        )
    n = M.shape[1]
    Q, R, piv = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(n)
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    # |R_kk| is non-increasing under column pivoting, so the first `rank`
    # pivots are exactly the kept ones.
    beta = np.zeros(n)
    if rank > 0:
        rhs = Q[:, :rank].T @ y
        sol = scipy.linalg.solve_triangular(R[:rank, :rank], rhs, lower=False)
        beta[piv[:rank]] = sol
    return beta


def soft_threshold(v, lam: float) -> np.ndarray:
    """Entrywise ``sign(v) * max(|v| - lam, 0)`` for ``lam >= 0``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    v = as_vector(v)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def save_matrix(path, M) -> None:
    """Write a matrix as CSV: header ``rows,cols``, then one row per line."""
    M = as_matrix(M)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{M.shape[0]},{M.shape[1]}\n")
        for row in M:
            fh.write(",".join(_FMT % x for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path) as fh:
        header = fh.readline().strip()
        rows, cols = (int(tok) for tok in header.split(","))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (rows, cols):
        raise DimensionMismatch(
            f"{path}: header says {rows}x{cols} but body is {data.shape}"
        )
    return as_matrix(data)


def save_vector(path, v) -> None:
    """Write a vector as a rows x 1 matrix CSV."""
    save_matrix(path, as_vector(v)[:, np.newaxis])


def load_vector(path) -> np.ndarray:
    """Read a vector from a rows x 1 (or 1 x cols) matrix CSV."""
    return as_vector(load_matrix(path))
