"""Persistently exciting inputs and the rank certificates they grant.

An input sequence is persistently exciting (PE) of order L when its depth-L
Hankel matrix has full row rank m*L.  Data collected from a controllable
plant under an input that is PE of order n+L satisfies the stacked rank
condition checked by :func:`check_willems_rank`, and any length-L target
trajectory is then a linear combination of the recorded data windows
(:func:`trajectory_from_data`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .linops import hankel
from .systems import Trajectory, numerical_rank

_MAX_RESAMPLE = 100
MIN_PAIR_ANGLE = 1e-8  # radians


def is_persistently_exciting(inputs: np.ndarray, L: int) -> bool:
    """Check persistent excitation of order L.

    Args:
        inputs: Input samples, shape (N, m) or (N,) for scalar inputs.
        L: Excitation order (>= 1).

    Returns:
        True iff the depth-L Hankel matrix of the sequence has numerical
        rank m*L.  Sequences shorter than (m+1)L - 1 cannot satisfy this
        and yield False.

    Raises:
        DimensionError: If L < 1.
    """
    if L < 1:
        raise DimensionError(f"excitation order must be >= 1, got {L}")
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    N, m = U.shape
    if N < (m + 1) * L - 1:
        return False
    return numerical_rank(hankel(U, L)) == m * L


def generate_pe_input(m: int, L: int, N: int, seed,
                      amplitude: float = 1.0) -> np.ndarray:
    """Draw a random input sequence that is PE of order L.

    Entries are uniform in [-amplitude, amplitude] (default [-1, 1]); the
    draw is repeated until the Hankel rank test passes (failure has measure
    zero, so retries are a formality).  Deterministic per seed.

    Args:
        m: Input dimension.
        L: Required excitation order.
        N: Sample count; must satisfy N >= (m+1)L - 1.
        seed: Anything accepted by ``numpy.random.default_rng``.
        amplitude: Half-width of the uniform entry distribution.

    Returns:
        Array of shape (N, m).

    Raises:
        DimensionError: If N is too short for order L.
        NumericalError: If the retry cap is exhausted.
    """
    if L < 1 or m < 1:
        raise DimensionError(f"need m >= 1 and L >= 1, got m={m}, L={L}")
    if N < (m + 1) * L - 1:
        raise DimensionError(
            f"persistent excitation of order {L} needs N >= (m+1)L-1 = "
            f"{(m + 1) * L - 1}, got N={N}")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RESAMPLE):
        U = rng.uniform(-amplitude, amplitude, (N, m))
        if is_persistently_exciting(U, L):
            return U
    raise NumericalError(f"no PE input of order {L} found in {_MAX_RESAMPLE} draws")


def check_willems_rank(traj: Trajectory, L: int) -> bool:
    """Check the stacked data-matrix rank condition.

    Stacks the first N-L+1 states over the depth-L input Hankel matrix and
    tests whether the result has numerical rank L*m + n.  For data from a
    controllable plant excited at order n+L this holds with probability one.

    Raises:
        DimensionError: If L is out of range for the trajectory length.
    """
    if L < 1:
        raise DimensionError(f"window length must be >= 1, got {L}")
    N = traj.sample_count
    if L > N:
        raise DimensionError(f"window length {L} exceeds sample count {N}")
    cols = N - L + 1
    stacked = np.vstack([traj.states[:cols].T, hankel(traj.inputs, L)])
    return numerical_rank(stacked) == L * traj.m + traj.n


@dataclass(frozen=True)
class TrajectoryFit:
    """Result of expressing a target window in recorded data.

    ``alpha`` solves the stacked Hankel system in the least-squares sense;
    ``feasible`` reports whether the residual is small enough for the target
    to be a genuine trajectory of the data-generating plant.
    """

    alpha: np.ndarray
    residual: float
    feasible: bool


def trajectory_from_data(traj: Trajectory, L: int, target_x: np.ndarray,
                         target_u: np.ndarray,
                         rtol: float = 1e-8) -> TrajectoryFit:
    """Fit a length-L target (state, input) window to recorded data.

    Solves ``[H_L(x); H_L(u)] alpha = [xbar; ubar]`` by least squares, where
    the Hankel matrices are built from the first N states and inputs of
    ``traj``.  Feasibility means residual <= rtol * (1 + ||target||).

    Args:
        traj: Recorded data; its input should be PE of order n+L for the
            feasibility verdict to be meaningful.
        L: Target window length.
        target_x: Target states, shape (L, n).
        target_u: Target inputs, shape (L, m).
        rtol: Relative residual threshold.

    Raises:
        DimensionError: On shape mismatch.
    """
    Xbar = np.asarray(target_x, dtype=float).reshape(L, -1)
    Ubar = np.asarray(target_u, dtype=float).reshape(L, -1)
    if Xbar.shape[1] != traj.n or Ubar.shape[1] != traj.m:
        raise DimensionError(
            f"target dimensions ({Xbar.shape[1]}, {Ubar.shape[1]}) do not match "
            f"data dimensions ({traj.n}, {traj.m})")
    N = traj.sample_count
    H = np.vstack([hankel(traj.states[:N], L), hankel(traj.inputs, L)])
    rhs = np.concatenate([Xbar.ravel(), Ubar.ravel()])
    alpha, *_ = np.linalg.lstsq(H, rhs, rcond=None)
    residual = float(np.linalg.norm(H @ alpha - rhs))
    feasible = residual <= rtol * (1.0 + float(np.linalg.norm(rhs)))
    return TrajectoryFit(alpha=alpha, residual=residual, feasible=feasible)


def no_parallel_pairs(traj: Trajectory,
                      min_angle: float = MIN_PAIR_ANGLE) -> bool:
    """Check that no two stacked samples z_k = [x_k; u_k] are parallel.

    Returns True when the angle between every pair of z-vectors (as lines,
    so sign is ignored) exceeds ``min_angle`` radians.  A zero vector counts
    as parallel to everything and yields False.
    """
    Z = np.hstack([traj.states[:traj.sample_count], traj.inputs])
    return _no_parallel_rows(Z, min_angle)


def _no_parallel_rows(Z: np.ndarray, min_angle: float = MIN_PAIR_ANGLE) -> bool:
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0.0):
        return False
    Zn = Z / norms[:, None]
    gram = np.abs(Zn @ Zn.T)
    np.fill_diagonal(gram, 0.0)
    # Cheap screen first; the Gram entries lose accuracy only near |cos| = 1,
    # so recompute suspect pairs from chord lengths, which stay accurate.
    suspects = np.argwhere(gram > np.cos(max(min_angle, 1e-6)))
    for i, j in suspects:
        if i >= j:
            continue
        chord = min(np.linalg.norm(Zn[i] - Zn[j]), np.linalg.norm(Zn[i] + Zn[j]))
        if 2.0 * np.arcsin(min(chord / 2.0, 1.0)) <= min_angle:
            return False
    return True
