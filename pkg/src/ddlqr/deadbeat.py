"""Data-based deadbeat feedback design.

From one persistently excited experiment, build a fictitious controllable
pair (Abar, BbarF) whose reachable closed loops coincide with those of the
unknown plant, place all of its poles at zero through the multi-input
controller canonical form, and map the fictitious feedback back to a gain
K for the real plant.  The result drives the true closed loop A - B K to
nilpotency, which makes it the stock supplier of the stabilizing initial
gain the learning loop requires.

Useful identities behind the construction (X- are the first N-1 states,
X+ their successors, U- the first N-1 inputs, F the pseudoinverse of X-,
G an orthonormal nullspace basis of X-):

    Abar = X+ F = A + B (U- F),     Bbar = X+ G = B (U- G),

so rank(Bbar) <= m always, and for any H with X- W = I, W = F - G H:

    A - B K = X+ W = Abar - Bbar H,   where K = -U- W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ControllabilityError, DimensionError, RankDeficientError,
                     StructureError, UnsupportedInstanceError)
from .systems import Trajectory, spectral_radius

_CHAIN_RTOL = 1e-9        # chain continuation threshold, relative per column
_SIMILARITY_RTOL = 1e-8
_SCALE_TARGET = 0.95      # spectral radius of the scaled Abar fed to the form


def min_samples(n: int, m: int) -> int:
    """Smallest sample count the design accepts: (m+1)(n+1) - 1."""
    return (m + 1) * (n + 1) - 1


def data_matrices(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a trajectory into the shifted data matrices of the design.

    Returns:
        (h0x, h1x, h0u): states x_0..x_{N-2}, shifted states x_1..x_{N-1},
        and inputs u_0..u_{N-2}, each with N-1 columns.

    Raises:
        DimensionError: If the trajectory is shorter than (m+1)(n+1) - 1
            samples.
    """
    N = traj.sample_count
    need = min_samples(traj.n, traj.m)
    if N < need:
        raise DimensionError(
            f"deadbeat design needs N >= (m+1)(n+1)-1 = {need} samples, got {N}")
    X = traj.states
    U = traj.inputs
    h0x = X[:N - 1].T.copy()
    h1x = X[1:N].T.copy()
    h0u = U[:N - 1].T.copy()
    return h0x, h1x, h0u


@dataclass(frozen=True)
class FictitiousSystem:
    """The data-defined pair used for pole placement.

    ``f`` is the Moore-Penrose pseudoinverse of h0x and ``g`` an orthonormal
    basis of its right nullspace, so h0x @ f = I and h0x @ g = 0.
    """

    abar: np.ndarray   # n x n
    bbar: np.ndarray   # n x g
    f: np.ndarray      # (N-1) x n
    g: np.ndarray      # (N-1) x g


def fictitious_system(h0x: np.ndarray, h1x: np.ndarray) -> FictitiousSystem:
    """Build the fictitious pair (h1x F, h1x G) from the data matrices.

    Raises:
        RankDeficientError: If h0x does not have full row rank (persistent
            excitation failed).
    """
    h0x = np.asarray(h0x, dtype=float)
    h1x = np.asarray(h1x, dtype=float)
    if h0x.shape != h1x.shape:
        raise DimensionError(
            f"state matrices must match, got {h0x.shape} vs {h1x.shape}")
    n, cols = h0x.shape
    U, sv, Vt = np.linalg.svd(h0x, full_matrices=True)
    rank = int(np.sum(sv > sv[0] * max(h0x.shape) * np.finfo(float).eps)) if sv.size else 0
    if rank != n:
        raise RankDeficientError(
            f"state data matrix has rank {rank} < {n}; excitation insufficient")
    F = (Vt[:n].T / sv) @ U.T
    G = Vt[n:].T
    return FictitiousSystem(abar=h1x @ F, bbar=h1x @ G, f=F, g=G)


def select_independent_columns(
    bbar: np.ndarray,
    tol: float | None = None,
    max_columns: int | None = None,
) -> tuple[np.ndarray, list[int]]:
    """Greedy pivoted selection of linearly independent columns.

    Each pass keeps the column with the largest component orthogonal to
    the span of the columns already kept (the column-pivoted QR order,
    which keeps the selected submatrix well conditioned) and stops once
    that component drops to ``tol``.  Deterministic: ties resolve to the
    lowest column index.

    Args:
        bbar: Matrix to select from.
        tol: Absolute residual threshold for keeping a column.  Defaults to
            the rank threshold sigma_max * max(shape) * eps; pass a larger
            one when the matrix is a product of noisy factors.
        max_columns: Optional cap on the number of kept columns.

    Returns:
        (kept submatrix, kept column indices in selection order).
    """
    B = np.asarray(bbar, dtype=float)
    if B.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {B.shape}")
    n, g = B.shape
    if tol is None:
        smax = np.linalg.norm(B, 2) if B.size else 0.0
        tol = smax * max(n, g) * np.finfo(float).eps
    cap = min(n, g) if max_columns is None else min(max_columns, n, g)
    kept: list[int] = []
    basis = np.zeros((n, 0))
    residual = B.copy()
    while len(kept) < cap:
        norms = np.linalg.norm(residual, axis=0)
        norms[kept] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= tol:
            break
        q = residual[:, j] / norms[j]
        q -= basis @ (basis.T @ q)       # second pass for orthogonality
        q /= np.linalg.norm(q)
        basis = np.hstack([basis, q[:, None]])
        residual -= np.outer(q, q @ residual)
        kept.append(j)
    return B[:, kept].copy(), kept


@dataclass(frozen=True)
class ControllerForm:
    """Multi-input controller canonical form ``ac = t @ a @ inv(t)``, ``bc = t @ b``.

    Rows of ``bc`` are zero except at the block boundaries ``sigma`` (the
    cumulative controllability indices), where they form an invertible
    matrix with unit diagonal.
    """

    ac: np.ndarray
    bc: np.ndarray
    t: np.ndarray
    indices: tuple[int, ...]


def mimo_controllable_form(abar: np.ndarray, bbarf: np.ndarray) -> ControllerForm:
    """Transform a controllable pair to controller canonical form.

    Scans the Krylov columns [b_1..b_r, A b_1..A b_r, ...] in that order,
    keeping each column that is independent of those already kept, which
    yields the controllability indices mu_i; the transformation rows are
    the Krylov iterates of selected rows of the inverse of the kept-column
    matrix.

    Args:
        abar: Square matrix (n x n).
        bbarf: Full-column-rank input matrix (n x r).

    Returns:
        ControllerForm with the similarity verified to 1e-8 relative.

    Raises:
        ControllabilityError: If the pair is not controllable or bbarf has
            a dependent column.
    """
    A = np.asarray(abar, dtype=float)
    B = np.asarray(bbarf, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n or B.shape[1] < 1:
        raise DimensionError(f"input matrix must be {n} x r, got shape {B.shape}")
    r = B.shape[1]

    mu = [0] * r
    chains: list[list[np.ndarray]] = [[] for _ in range(r)]
    basis = np.zeros((n, 0))
    P = B.copy()
    for power in range(n):
        for i in range(r):
            if mu[i] < power:      # chain i already terminated
                continue
            c = P[:, i]
            norm_c = np.linalg.norm(c)
            res = c - basis @ (basis.T @ c)
            res -= basis @ (basis.T @ res)
            if norm_c > 0 and np.linalg.norm(res) > _CHAIN_RTOL * norm_c:
                chains[i].append(c.copy())
                mu[i] += 1
                basis = np.hstack([basis, (res / np.linalg.norm(res))[:, None]])
            if basis.shape[1] == n:
                break
        if basis.shape[1] == n:
            break
        P = A @ P
    if any(k == 0 for k in mu):
        raise ControllabilityError(
            "input matrix has a numerically dependent column; "
            "select independent columns first")
    if sum(mu) != n:
        raise ControllabilityError(
            f"pair is not controllable: indices {mu} sum to {sum(mu)} < {n}")

    S = np.hstack([np.column_stack(chains[i]) for i in range(r)])
    try:
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise ControllabilityError(f"Krylov basis is singular: {exc}") from exc
    boundaries = np.cumsum(mu)
    rows = []
    for i in range(r):
        q = S_inv[boundaries[i] - 1]
        for _ in range(mu[i]):
            rows.append(q)
            q = q @ A
    T = np.array(rows)
    T_inv = np.linalg.inv(T)
    Ac = T @ A @ T_inv
    Bc = T @ B
    defect = np.linalg.norm(T @ A - Ac @ T)
    if defect > _SIMILARITY_RTOL * (1.0 + np.linalg.norm(A)) * max(1.0, np.linalg.norm(T)):
        raise ControllabilityError(
            f"canonical transformation is too ill-conditioned (defect {defect:.3e})")
    return ControllerForm(ac=Ac, bc=Bc, t=T, indices=tuple(mu))


def deadbeat_gain_canonical(ac: np.ndarray, bc: np.ndarray) -> np.ndarray:
    """Deadbeat feedback for a pair in controller canonical form.

    The coefficient rows of ``ac`` sit exactly where ``bc`` has its nonzero
    rows; cancelling them leaves the pure shift structure, which is
    nilpotent.  Returns Hc with ``ac - bc @ Hc`` nilpotent.

    Raises:
        StructureError: If (ac, bc) does not have the canonical structure.
    """
    Ac = np.asarray(ac, dtype=float)
    Bc = np.asarray(bc, dtype=float)
    if Ac.ndim != 2 or Ac.shape[0] != Ac.shape[1] or Bc.shape[0] != Ac.shape[0]:
        raise DimensionError("canonical pair has inconsistent shapes")
    n, r = Bc.shape
    row_mag = np.abs(Bc).max(axis=1, initial=0.0)
    peak = row_mag.max(initial=0.0)
    if peak == 0.0:
        raise StructureError("input matrix of the canonical pair is zero")
    # Coefficient rows carry the unit diagonal of bc; every other row of bc
    # is zero up to rounding, so a coarse relative threshold separates them.
    sigma = np.flatnonzero(row_mag > 1e-3 * peak)
    if sigma.size != r:
        raise StructureError(
            f"expected {r} coefficient rows, found {sigma.size}; "
            "the pair is not in controller canonical form")
    off = np.setdiff1d(np.arange(n), sigma)
    shift = np.zeros((off.size, n))
    shift[np.arange(off.size), off + 1] = 1.0
    defect = np.abs(Ac[off, :] - shift).max(initial=0.0)
    if defect > 1e-6 * (1.0 + np.abs(Ac).max(initial=0.0)):
        raise StructureError(
            f"rows off the block boundaries are not unit shifts "
            f"(defect {defect:.3e}); the pair is not in controller canonical form")
    lead = Bc[sigma, :]
    try:
        Hc = np.linalg.solve(lead, Ac[sigma, :])
    except np.linalg.LinAlgError as exc:
        raise StructureError(f"coefficient rows of bc are singular: {exc}") from exc
    return Hc


def expand_with_zero_rows(hf: np.ndarray, kept: list[int], total: int) -> np.ndarray:
    """Insert zero rows so the expanded feedback matches the full input set.

    Row ``kept[i]`` of the result is row i of ``hf``; all other rows are
    zero, which makes ``bbar_f @ hf == bbar @ expanded`` hold exactly.
    """
    hf = np.asarray(hf, dtype=float)
    out = np.zeros((total, hf.shape[1]))
    out[list(kept), :] = hf
    return out


def deadbeat_from_data(traj: Trajectory, column_tol: float | None = None) -> np.ndarray:
    """Compute a deadbeat gain for the unknown plant from recorded data.

    Composes the full design: data matrices, fictitious pair, independent
    column selection (capped at m, since rank(Bbar) <= m by construction),
    canonical-form pole placement at zero, zero-row expansion, and the map
    back to the plant.  The returned K makes A - B K nilpotent for the
    (unseen) true plant, so u = -K x drives any state to the origin in at
    most n steps.

    Args:
        traj: At least (m+1)(n+1) - 1 samples from a persistently excited
            experiment.
        column_tol: Override for the column-selection threshold.  The
            default scales with eps times the shifted-state magnitude,
            which tracks the formation error of the fictitious input
            matrix.

    Raises:
        DimensionError, RankDeficientError, ControllabilityError,
        UnsupportedInstanceError: Propagated from the individual steps.
    """
    h0x, h1x, h0u = data_matrices(traj)
    fict = fictitious_system(h0x, h1x)
    n, m = traj.n, traj.m
    if column_tol is None:
        scale = max(np.linalg.norm(fict.bbar, 2), np.linalg.norm(h1x, 2))
        column_tol = scale * max(fict.bbar.shape) * np.finfo(float).eps * 1e3
    bbar_f, kept = select_independent_columns(fict.bbar, tol=column_tol,
                                              max_columns=m)
    if not kept:
        raise UnsupportedInstanceError(
            "fictitious input matrix has rank 0; the data leave no feedback "
            "freedom for pole placement")
    # Nilpotency is invariant under scaling Abar, so condition the canonical
    # form on a contracted copy and undo the scale on the feedback.
    scale = max(spectral_radius(fict.abar), 1.0) / _SCALE_TARGET
    form = mimo_controllable_form(fict.abar / scale, bbar_f)
    hc = deadbeat_gain_canonical(form.ac, form.bc)
    hf = scale * (hc @ form.t)
    hbar = expand_with_zero_rows(hf, kept, fict.bbar.shape[1])
    return h0u @ (fict.g @ hbar - fict.f)
