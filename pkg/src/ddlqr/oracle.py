"""Model-based ground truth for verification: Riccati, Lyapunov, and the
exact policy-iteration reference.

Nothing in this module is available to the data-driven learner; it exists so
tests and audit harnesses can compare learned quantities against the answers
computed from the true plant matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalError
from .qlearn import QTheta, policy_improvement
from .systems import LinearSystem, closed_loop, spectral_radius

DARE_TOL = 1e-12
DARE_MAX_ITER = 10**6


@dataclass(frozen=True)
class CostWeights:
    """Positive-definite state and input weights of the quadratic cost.

    ``qbar`` is the block-diagonal combination diag(Q, R) that weights the
    stacked vector z = [x; u].
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        for name, M in (("Q", Q), ("R", R)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got shape {M.shape}")
            if np.abs(M - M.T).max(initial=0.0) > 1e-10 * (1.0 + np.abs(M).max(initial=0.0)):
                raise DimensionError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M)[0] <= 0.0:
                raise DimensionError(f"{name} must be positive definite")
        Q = Q.copy(); Q.setflags(write=False)
        R = R.copy(); R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def qbar(self) -> np.ndarray:
        n, m = self.n, self.m
        out = np.zeros((n + m, n + m))
        out[:n, :n] = self.Q
        out[n:, n:] = self.R
        return out

    @classmethod
    def identity(cls, n: int, m: int) -> "CostWeights":
        return cls(Q=np.eye(n), R=np.eye(m))


@dataclass(frozen=True)
class PhiMatrix:
    """Stacked closed-loop map of one policy over z = [x; u].

    For gain K (control u = -K x) this is::

        Phi = [[A, B], [-K A, -K B]] = Kbar @ S,
        Kbar = [I; -K],  S = [A, B],

    and Phi shares its nonzero spectrum with A - B K.
    """

    matrix: np.ndarray
    kbar: np.ndarray
    s: np.ndarray

    @classmethod
    def from_gain(cls, sys: LinearSystem, K: np.ndarray) -> "PhiMatrix":
        K = np.asarray(K, dtype=float)
        if K.shape != (sys.m, sys.n):
            raise DimensionError(f"gain must be {sys.m} x {sys.n}, got {K.shape}")
        s = np.hstack([sys.A, sys.B])
        kbar = np.vstack([np.eye(sys.n), -K])
        return cls(matrix=kbar @ s, kbar=kbar, s=s)


def solve_dare(sys: LinearSystem, weights: CostWeights,
               tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER) -> np.ndarray:
    """Fixed-point Riccati recursion for the infinite-horizon cost matrix.

    Iterates ``P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA`` from P = Q until
    the update stalls below ``tol`` relative.  The returned P satisfies the
    Riccati equation with relative residual <= tol.

    Raises:
        ConvergenceError: If the recursion does not settle within
            ``max_iter`` sweeps (does not happen for controllable plants
            with positive-definite weights).
    """
    if weights.n != sys.n or weights.m != sys.m:
        raise DimensionError("cost weights do not match the plant dimensions")
    A, B, Q, R = sys.A, sys.B, weights.Q, weights.R
    P = Q.copy()
    for _ in range(max_iter):
        PA = P @ A
        PB = P @ B
        gain = np.linalg.solve(R + B.T @ PB, PB.T @ A)
        P_next = Q + A.T @ PA - (A.T @ PB) @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P) <= tol * (1.0 + np.linalg.norm(P_next)):
            return P_next
        P = P_next
    raise ConvergenceError(f"Riccati recursion did not converge in {max_iter} sweeps")


def dare_residual(sys: LinearSystem, weights: CostWeights, P: np.ndarray) -> float:
    """Norm of the Riccati-equation defect at P (diagnostic)."""
    A, B, Q, R = sys.A, sys.B, weights.Q, weights.R
    inner = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return float(np.linalg.norm(Q + A.T @ P @ A - (A.T @ P @ B) @ inner - P))


def lqr_gain(sys: LinearSystem, weights: CostWeights, P: np.ndarray) -> np.ndarray:
    """Optimal gain K* = (R + B'PB)^{-1} B'PA for the control law u = -K* x."""
    B, R = sys.B, weights.R
    M = R + B.T @ P @ B
    try:
        return np.linalg.solve(M, B.T @ P @ sys.A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"R + B'PB is singular: {exc}") from exc


def theta_star(sys: LinearSystem, weights: CostWeights, P: np.ndarray) -> QTheta:
    """Optimal Q-kernel assembled from the Riccati solution."""
    A, B, Q, R = sys.A, sys.B, weights.Q, weights.R
    PA, PB = P @ A, P @ B
    T = np.block([[Q + A.T @ PA, A.T @ PB],
                  [B.T @ PA, R + B.T @ PB]])
    return QTheta(theta=0.5 * (T + T.T), n=sys.n, m=sys.m)


def solve_dlyap(phi: PhiMatrix | np.ndarray, qbar: np.ndarray,
                state_dim: int | None = None) -> QTheta:
    """Solve the discrete Lyapunov equation ``T = Qbar + Phi' T Phi``.

    Uses the dense vectorized form: (I - kron(Phi', Phi')) vec(T) = vec(Qbar).
    Sizes here are (n+m)^2 unknowns, small enough that exactness beats
    asymptotics.

    Args:
        phi: Policy map (PhiMatrix or raw square array); must be Schur
            stable for a positive-definite solution to exist.
        qbar: Symmetric positive-definite weight of the same size.
        state_dim: Block split of the returned kernel when ``phi`` is a raw
            array; defaults to the full dimension (empty input block).

    Raises:
        NumericalError: If phi is not Schur stable.
    """
    if isinstance(phi, PhiMatrix):
        F = phi.matrix
        n = phi.kbar.shape[1]
    else:
        F = np.asarray(phi, dtype=float)
        n = F.shape[0] if state_dim is None else state_dim
    qbar = np.asarray(qbar, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1] or F.shape != qbar.shape:
        raise DimensionError(
            f"phi and qbar must be square and matching, got {F.shape} vs {qbar.shape}")
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise NumericalError(
            f"policy map has spectral radius {rho:.6f} >= 1; "
            "the Lyapunov equation has no positive-definite solution")
    d = F.shape[0]
    lhs = np.eye(d * d) - np.kron(F.T, F.T)
    vec = np.linalg.solve(lhs, qbar.reshape(-1))
    T = vec.reshape(d, d)
    T = 0.5 * (T + T.T)
    resid = np.linalg.norm(T - qbar - F.T @ T @ F)
    if resid > 1e-10 * max(1.0, np.linalg.norm(T)):
        raise NumericalError(f"Lyapunov residual {resid:.3e} exceeds its bound")
    return QTheta(theta=T, n=n, m=d - n)


def hewer_iteration(sys: LinearSystem, weights: CostWeights, K0: np.ndarray,
                    iters: int) -> list[tuple[QTheta, np.ndarray]]:
    """Exact model-based policy iteration, the reference for the learner.

    Starting from a stabilizing gain, repeatedly solves the Lyapunov
    equation for the current policy map and updates the gain from the
    kernel partition.  Returns the list of (kernel, gain) pairs
    (Theta^{i+1}, K^{i+1}) for i = 0 .. iters-1.

    Raises:
        NumericalError: If K0 is not stabilizing.
    """
    K = np.asarray(K0, dtype=float)
    rho = spectral_radius(closed_loop(sys, K))
    if rho >= 1.0:
        raise NumericalError(f"initial gain is not stabilizing (radius {rho:.6f})")
    out: list[tuple[QTheta, np.ndarray]] = []
    qbar = weights.qbar
    for _ in range(iters):
        phi = PhiMatrix.from_gain(sys, K)
        theta = solve_dlyap(phi, qbar)
        K = policy_improvement(theta)
        out.append((theta, K))
    return out
