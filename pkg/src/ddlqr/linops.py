"""Symmetric-matrix vectorization, quadratic-monomial lifting, and Hankel matrices.

The half-vectorization used throughout the package lists the distinct entries
of a symmetric d x d matrix in row-major upper-triangle order::

    (1,1), (1,2), ..., (1,d), (2,2), (2,3), ..., (d,d)

``quad_monomials`` uses the same ordering with the off-diagonal products
doubled, so that ``quad_monomials(x) @ vec_sym(P) == x.T @ P @ x`` for every
symmetric ``P``.  All regression matrices built elsewhere in the package rely
on this single convention.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

SYM_RTOL = 1e-10


def sym_vec_length(d: int) -> int:
    """Number of distinct entries of a symmetric d x d matrix."""
    return d * (d + 1) // 2


def sym_dim(length: int) -> int:
    """Matrix dimension whose half-vectorization has ``length`` entries.

    Raises:
        DimensionError: If ``length`` is not a triangular number.
    """
    d = int((np.sqrt(8 * length + 1) - 1) / 2 + 0.5)
    if d < 1 or d * (d + 1) // 2 != length:
        raise DimensionError(f"length {length} is not a triangular number")
    return d


def vec_sym(P: np.ndarray) -> np.ndarray:
    """Half-vectorize a symmetric matrix in the canonical ordering.

    Args:
        P: Symmetric matrix of shape (d, d).  Symmetry is checked to a
            relative tolerance of 1e-10.

    Returns:
        Vector of length d(d+1)/2 holding the upper triangle row by row.

    Raises:
        DimensionError: If ``P`` is not square or not symmetric.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {P.shape}")
    asym = np.abs(P - P.T).max(initial=0.0)
    if asym > SYM_RTOL * (1.0 + np.abs(P).max(initial=0.0)):
        raise DimensionError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    iu, ju = np.triu_indices(P.shape[0])
    return P[iu, ju].copy()


def unvec_sym(v: np.ndarray) -> np.ndarray:
    """Rebuild the symmetric matrix from its half-vectorization.

    Exact inverse of :func:`vec_sym`.
    """
    v = np.asarray(v, dtype=float).ravel()
    d = sym_dim(v.size)
    P = np.zeros((d, d))
    iu, ju = np.triu_indices(d)
    P[iu, ju] = v
    P[ju, iu] = v
    return P


def quad_monomials(x: np.ndarray) -> np.ndarray:
    """Quadratic monomial lift of a vector.

    Returns ``[x1^2, 2 x1 x2, ..., 2 x1 xd, x2^2, ..., xd^2]`` so that the dot
    product with ``vec_sym(P)`` evaluates the quadratic form ``x.T @ P @ x``.
    """
    x = np.asarray(x, dtype=float).ravel()
    return quad_monomial_rows(x[None, :])[0]


def quad_monomial_rows(X: np.ndarray) -> np.ndarray:
    """Row-wise :func:`quad_monomials` for a batch of vectors.

    Args:
        X: Array of shape (N, d); each row is lifted independently.

    Returns:
        Array of shape (N, d(d+1)/2).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-d batch of vectors, got shape {X.shape}")
    d = X.shape[1]
    iu, ju = np.triu_indices(d)
    weights = np.where(iu == ju, 1.0, 2.0)
    return weights * (X[:, iu] * X[:, ju])


def hankel(seq: np.ndarray, L: int) -> np.ndarray:
    """Block Hankel matrix of a vector sequence with window length ``L``.

    Args:
        seq: Sequence of N samples, shape (N, d) or (N,) for scalars.
        L: Window length, 1 <= L <= N.

    Returns:
        Matrix of shape (d*L, N - L + 1) whose block (i, j) is ``seq[i + j]``.

    Raises:
        DimensionError: If ``L`` is out of range.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    if seq.ndim != 2:
        raise DimensionError(f"expected a sequence of vectors, got shape {seq.shape}")
    N, d = seq.shape
    if L < 1:
        raise DimensionError(f"window length must be >= 1, got {L}")
    if L > N:
        raise DimensionError(f"window length {L} exceeds sequence length {N}")
    cols = N - L + 1
    return np.vstack([seq[i:i + cols].T for i in range(L)])
