"""Off-policy Q-learning for the discrete-time LQR problem.

One batch of persistently excited data is collected once; policy evaluation
then solves, at each iteration, the square linear system

    (ztilde_k - zetatilde_k)^T vec(Theta) = z_k^T Qbar z_k,   k = 0..eta-1,

for the quadratic Q-function kernel Theta, where z_k = [x_k; u_k],
zeta_k = [x_{k+1}; -K x_{k+1}] and the tildes denote the quadratic-monomial
lift.  Policy improvement reads the new gain off the kernel partition.  The
plant matrices are never accessed; the optional audit hooks that do look at
a true plant exist purely for verification harnesses.

Sign convention: gains K define the control law u = -K x, and the
improvement step is K = Theta_uu^{-1} Theta_ux.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import (DimensionError, ImprovementError, NumericalError,
                     SingularRegressorError)
from .excitation import (_no_parallel_rows, generate_pe_input,
                         is_persistently_exciting)
from .linops import quad_monomial_rows, sym_vec_length, unvec_sym, vec_sym
from .systems import LinearSystem, Trajectory, closed_loop, simulate, spectral_radius

if TYPE_CHECKING:
    from .oracle import CostWeights

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12          # beyond this the solution carries no trusted digits
RESIDUAL_RTOL = 1e-8       # policy-evaluation residual bound, relative to ||C||


def eta_dim(n: int, m: int) -> int:
    """Unknown count (n+m)(n+m+1)/2 of the symmetric kernel."""
    return sym_vec_length(n + m)


@dataclass(frozen=True)
class QTheta:
    """Symmetric Q-function kernel over the stacked vector z = [x; u].

    The (n+m) x (n+m) matrix tiles as::

        [[theta_xx, theta_ux^T],
         [theta_ux, theta_uu  ]]

    with theta_xx (n x n), theta_ux (m x n), theta_uu (m x m).  Valid
    iterates are positive definite; that is diagnosed, not enforced.
    """

    theta: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        T = np.asarray(self.theta, dtype=float)
        if T.shape != (self.n + self.m, self.n + self.m):
            raise DimensionError(
                f"kernel must be {self.n + self.m} square, got shape {T.shape}")
        asym = np.abs(T - T.T).max(initial=0.0)
        if asym > 1e-10 * (1.0 + np.abs(T).max(initial=0.0)):
            raise DimensionError(f"kernel is not symmetric (asymmetry {asym:.3e})")
        T = T.copy()
        T.setflags(write=False)
        object.__setattr__(self, "theta", T)

    @property
    def theta_xx(self) -> np.ndarray:
        return self.theta[:self.n, :self.n]

    @property
    def theta_ux(self) -> np.ndarray:
        return self.theta[self.n:, :self.n]

    @property
    def theta_uu(self) -> np.ndarray:
        return self.theta[self.n:, self.n:]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.theta)[0])


@dataclass(frozen=True)
class LearningData:
    """One batch of excitation data, packaged for the learning loop.

    Holds eta+1 stacked samples z_k = [x_k; u_k] and the eta successor
    states x_1 .. x_eta; sample eta appears only as the successor of
    sample eta-1.
    """

    z: np.ndarray        # (eta + 1, n + m)
    x_next: np.ndarray   # (eta, n)
    n: int
    m: int

    def __post_init__(self):
        eta = eta_dim(self.n, self.m)
        z = np.asarray(self.z, dtype=float)
        xn = np.asarray(self.x_next, dtype=float)
        if z.shape != (eta + 1, self.n + self.m):
            raise DimensionError(
                f"need eta+1 = {eta + 1} stacked samples of size {self.n + self.m}, "
                f"got shape {z.shape}")
        if xn.shape != (eta, self.n):
            raise DimensionError(
                f"need {eta} successor states of size {self.n}, got shape {xn.shape}")
        z = z.copy(); z.setflags(write=False)
        xn = xn.copy(); xn.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x_next", xn)

    @property
    def eta(self) -> int:
        return eta_dim(self.n, self.m)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, *,
                        require_pe: bool = True) -> "LearningData":
        """Package a recorded trajectory of at least eta+1 samples.

        Args:
            traj: Source data; the first eta+1 samples are used.
            require_pe: When True, the packaged input must be persistently
                exciting of order n+1 (raises SingularRegressorError if not).
                A parallel pair among the z-vectors only triggers a warning.
        """
        n, m = traj.n, traj.m
        eta = eta_dim(n, m)
        need = eta + 1
        if traj.sample_count < need or traj.states.shape[0] < need:
            raise DimensionError(
                f"learning needs eta+1 = {need} samples, trajectory has "
                f"{traj.sample_count}")
        X = traj.states[:need]
        U = traj.inputs[:need]
        if require_pe and not is_persistently_exciting(U, n + 1):
            raise SingularRegressorError(
                f"input is not persistently exciting of order n+1 = {n + 1}")
        Z = np.hstack([X, U])
        if not _no_parallel_rows(Z):
            warnings.warn("two stacked data vectors are (nearly) parallel; "
                          "the regressor may be singular", stacklevel=2)
        return cls(z=Z, x_next=X[1:need], n=n, m=m)


def collect_learning_data(sys: LinearSystem, x0: np.ndarray, seed,
                          amplitude: float = 1.0) -> LearningData:
    """Run one excitation experiment and package the data.

    Draws a persistently exciting input of order n+1 with eta+1 samples,
    simulates the plant from ``x0``, certifies excitation on the recorded
    input, and packages the stacked vectors with their successors.

    Args:
        sys: The plant (used for simulation only; the learner never reads it).
        x0: Initial state.
        seed: RNG seed for the input draw.
        amplitude: Input amplitude bound (entries uniform within it).
    """
    eta = eta_dim(sys.n, sys.m)
    U = generate_pe_input(sys.m, sys.n + 1, eta + 1, seed, amplitude=amplitude)
    traj = simulate(sys, x0, U)
    return LearningData.from_trajectory(traj)


def build_regressor(data: LearningData, K: np.ndarray,
                    weights: "CostWeights") -> tuple[np.ndarray, np.ndarray]:
    """Assemble the policy-evaluation system for gain ``K``.

    Column k of the returned matrix V is the lifted difference
    ``quad_monomials(z_k) - quad_monomials(zeta_k)`` with
    ``zeta_k = [x_{k+1}; -K x_{k+1}]``; the right-hand side has entries
    ``z_k^T Qbar z_k``.  Policy evaluation solves ``V.T @ vec(Theta) = C``.

    Returns:
        (V, C) with V of shape (eta, eta) and C of length eta.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (data.m, data.n):
        raise DimensionError(f"gain must be {data.m} x {data.n}, got {K.shape}")
    Z = data.z[:data.eta]
    zeta = np.hstack([data.x_next, -(data.x_next @ K.T)])
    rows = quad_monomial_rows(Z) - quad_monomial_rows(zeta)
    qbar = weights.qbar
    C = np.einsum("ki,ij,kj->k", Z, qbar, Z)
    return rows.T, C


def _pow2_scale(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.ceil(np.log2(v)))


def _solve_evaluation(V: np.ndarray, C: np.ndarray,
                      cond_limit: float = COND_LIMIT) -> tuple[np.ndarray, float]:
    """Solve V.T @ x = C by equilibrated pivoted LU with one refinement.

    Rows and columns are scaled by powers of two (so the scaled system is
    exactly equivalent); the condition gate applies to the equilibrated
    matrix, which is what gets factored.  Returns the solution and the
    1-norm condition estimate.
    """
    M = np.ascontiguousarray(V.T)
    if not np.all(np.isfinite(M)):
        raise SingularRegressorError("regressor has non-finite entries")
    row_inf = np.abs(M).max(axis=1)
    if np.any(row_inf == 0.0):
        raise SingularRegressorError("regressor has a zero row")
    dr = _pow2_scale(row_inf)
    Ms = M / dr[:, None]
    col_inf = np.abs(Ms).max(axis=0)
    if np.any(col_inf == 0.0):
        raise SingularRegressorError("regressor has a zero column")
    dc = _pow2_scale(col_inf)
    Ms /= dc[None, :]
    bs = C / dr
    try:
        with warnings.catch_warnings():
            # exact singularity surfaces as a warning; the condition gate
            # below turns it into the typed error
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = lu_factor(Ms)
    except np.linalg.LinAlgError as exc:
        raise SingularRegressorError(f"regressor factorization failed: {exc}") from exc
    anorm = np.abs(Ms).sum(axis=1).max()
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0:
        raise NumericalError(f"condition estimation failed (info={info})")
    cond = np.inf if rcond == 0.0 else 1.0 / rcond
    if cond > cond_limit:
        raise SingularRegressorError(
            f"regressor condition number {cond:.3e} exceeds {cond_limit:.1e}; "
            "excitation is insufficient or the policy is destabilizing")
    y = lu_solve((lu, piv), bs)
    y += lu_solve((lu, piv), bs - Ms @ y)
    x = y / dc
    residual = float(np.linalg.norm(M @ x - C))
    if residual > RESIDUAL_RTOL * (1.0 + float(np.linalg.norm(C))):
        raise NumericalError(
            f"policy-evaluation residual {residual:.3e} exceeds its bound")
    return x, float(cond)


def policy_evaluation(data: LearningData, K: np.ndarray,
                      weights: "CostWeights") -> QTheta:
    """Solve the lifted linear system for the Q-kernel of policy ``K``.

    The solution is re-symmetrized after unvectorization to guard
    accumulated asymmetry in downstream products.

    Raises:
        SingularRegressorError: If the regressor is numerically singular
            (condition estimate above 1e12).
    """
    theta, _ = _policy_evaluation(data, K, weights)
    return theta


def _policy_evaluation(data: LearningData, K: np.ndarray,
                       weights: "CostWeights") -> tuple[QTheta, float]:
    V, C = build_regressor(data, K, weights)
    vec, cond = _solve_evaluation(V, C)
    T = unvec_sym(vec)
    T = 0.5 * (T + T.T)
    return QTheta(theta=T, n=data.n, m=data.m), cond


def policy_improvement(theta: QTheta) -> np.ndarray:
    """New gain K = theta_uu^{-1} theta_ux, for the control law u = -K x.

    Raises:
        ImprovementError: If theta_uu is singular.
    """
    tuu = theta.theta_uu
    svals = np.linalg.svd(tuu, compute_uv=False)
    if svals[-1] == 0.0 or svals[0] / svals[-1] > COND_LIMIT:
        raise ImprovementError("input-input block of the kernel is singular")
    return np.linalg.solve(tuu, theta.theta_ux)


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics for one completed learning iteration."""

    gain_delta: float            # ||K^{i+1} - K^i||_2
    cond_v: float                # condition estimate of the regressor
    min_eig_theta: float         # smallest eigenvalue of Theta^{i+1}
    monotone_gap: float | None   # min eig of Theta^i - Theta^{i+1}; None at i=0
    closed_loop_radius: float | None = None  # audit only


@dataclass(frozen=True)
class RunDiagnostics:
    """Per-iteration records of a learning run, in iteration order."""

    records: tuple[IterationRecord, ...]

    def gain_deltas(self) -> np.ndarray:
        return np.array([r.gain_delta for r in self.records])


@dataclass(frozen=True)
class QLearningResult:
    """Outcome of a learning run.

    ``converged`` reports whether the last gain step was within tolerance;
    a run capped by ``max_iter`` without meeting it is returned (with its
    diagnostics) rather than raised.
    """

    gain: np.ndarray
    theta: QTheta
    diagnostics: RunDiagnostics
    iterations: int
    converged: bool
    wall_time_seconds: float

    def report(self) -> dict:
        """Structured report (JSON-ready) of the run."""
        return {
            "n": self.theta.n,
            "m": self.theta.m,
            "eta": eta_dim(self.theta.n, self.theta.m),
            "iterations": self.iterations,
            "final_gain": self.gain.tolist(),
            "final_theta": np.asarray(self.theta.theta).tolist(),
            "per_iteration": [
                {
                    "gain_delta": r.gain_delta,
                    "cond_V": r.cond_v,
                    "min_eig_theta": r.min_eig_theta,
                    "monotone_gap": r.monotone_gap,
                }
                for r in self.diagnostics.records
            ],
            "wall_time_seconds": self.wall_time_seconds,
        }


def run_qlearning(data: LearningData, K0: np.ndarray, weights: "CostWeights",
                  eps: float = 1e-10, max_iter: int = 50,
                  fixed_iterations: int | None = None,
                  audit_system: LinearSystem | None = None) -> QLearningResult:
    """Alternate policy evaluation and improvement on one data batch.

    Stops when the spectral-norm gain step drops to ``eps`` or after
    ``max_iter`` iterations; ``fixed_iterations`` overrides both and runs
    an exact count.  ``audit_system`` (verification harnesses only) adds
    the true closed-loop spectral radius to each diagnostic record.

    Args:
        data: Packaged excitation data.
        K0: Initial stabilizing gain (from the deadbeat design or external).
        weights: Cost weights defining the regulator problem.

    Raises:
        SingularRegressorError, ImprovementError: Propagated from the
            iteration, with the iteration index attached.
    """
    K = np.asarray(K0, dtype=float)
    if K.shape != (data.m, data.n):
        raise DimensionError(f"K0 must be {data.m} x {data.n}, got {K.shape}")
    budget = max_iter if fixed_iterations is None else fixed_iterations
    records: list[IterationRecord] = []
    theta = None
    prev_theta = None
    converged = False
    start = time.perf_counter()
    for i in range(budget):
        try:
            theta, cond = _policy_evaluation(data, K, weights)
            K_new = policy_improvement(theta)
        except (SingularRegressorError, ImprovementError) as exc:
            exc.iteration = i
            exc.args = (f"iteration {i}: {exc.args[0]}",)
            raise
        delta = float(np.linalg.norm(K_new - K, 2))
        gap = None
        if prev_theta is not None:
            gap = float(np.linalg.eigvalsh(prev_theta.theta - theta.theta)[0])
        radius = None
        if audit_system is not None:
            radius = spectral_radius(closed_loop(audit_system, K_new))
        records.append(IterationRecord(
            gain_delta=delta, cond_v=cond,
            min_eig_theta=theta.min_eigenvalue(),
            monotone_gap=gap, closed_loop_radius=radius))
        logger.debug("iteration %d: |dK| = %.3e, cond = %.3e", i, delta, cond)
        prev_theta = theta
        K = K_new
        converged = delta <= eps
        if fixed_iterations is None and converged:
            break
    elapsed = time.perf_counter() - start
    if theta is None:
        raise DimensionError("iteration budget must be at least 1")
    return QLearningResult(gain=K, theta=theta,
                           diagnostics=RunDiagnostics(records=tuple(records)),
                           iterations=len(records), converged=converged,
                           wall_time_seconds=elapsed)
