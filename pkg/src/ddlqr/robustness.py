"""Noisy-measurement learning, perturbation identities, and stability margins.

The learner only ever sees measured states chi_k = x_k + w_k with bounded
noise; the learning loop itself is unchanged.  The operations that quantify
the noise effect (epsilon terms, margin bounds) need the true plant and are
meant for instrumented verification runs, not for the learner.  The margin
checks are diagnostics: the noisy learner runs regardless and reports them.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .deadbeat import deadbeat_from_data
from .errors import DdlqrError, DimensionError
from .excitation import generate_pe_input
from .linops import quad_monomial_rows
from .oracle import CostWeights, PhiMatrix, lqr_gain, solve_dare
from .qlearn import (LearningData, QLearningResult, QTheta, eta_dim,
                     policy_evaluation, run_qlearning)
from .systems import (LinearSystem, Trajectory, closed_loop,
                      random_controllable_system, simulate, spectral_radius)

# Experiment-design defaults for the noise study; see the README for the
# signal-scale rationale.
STUDY_SPECTRAL_RADIUS = 0.95
STUDY_EXCITATION_AMPLITUDE = 10.0
STUDY_X0_SCALE = 10.0


@dataclass(frozen=True)
class NoisyData:
    """Measured states, clean inputs, and (for harness use) the true noise.

    ``chi = states + w`` componentwise; ``w`` is retained only so that
    instrumented tests can evaluate the exact perturbation identities.
    """

    chi: np.ndarray
    inputs: np.ndarray
    w: np.ndarray
    w_max: float

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=float)
        w = np.asarray(self.w, dtype=float)
        U = np.asarray(self.inputs, dtype=float)
        if chi.shape != w.shape:
            raise DimensionError("chi and w must have identical shapes")
        if chi.shape[0] not in (U.shape[0], U.shape[0] + 1):
            raise DimensionError("chi must hold N or N+1 samples")
        if self.w_max < 0:
            raise DimensionError("w_max must be nonnegative")
        if np.abs(w).max(initial=0.0) > self.w_max * (1 + 1e-12):
            raise DimensionError("noise exceeds its declared bound")
        for name, arr in (("chi", chi), ("inputs", U), ("w", w)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.chi.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def measured_trajectory(self) -> Trajectory:
        """The trajectory as the learner sees it (states replaced by chi)."""
        return Trajectory(inputs=self.inputs, states=self.chi)


def add_noise(traj: Trajectory, w_max: float, seed,
              distribution: str = "uniform") -> NoisyData:
    """Corrupt the recorded states with bounded measurement noise.

    Componentwise uniform on [-w_max, w_max] by default; ``gaussian``
    draws with standard deviation w_max/3 clipped to the same bound, so
    the bound invariant holds either way.  Inputs are untouched and the
    draw is deterministic per seed.
    """
    if w_max < 0:
        raise DimensionError("w_max must be nonnegative")
    rng = np.random.default_rng(seed)
    shape = traj.states.shape
    if distribution == "uniform":
        w = rng.uniform(-w_max, w_max, shape)
    elif distribution == "gaussian":
        w = np.clip(rng.normal(0.0, w_max / 3.0 if w_max else 0.0, shape),
                    -w_max, w_max)
    else:
        raise DimensionError(f"unknown noise distribution {distribution!r}")
    if w_max == 0.0:
        w = np.zeros(shape)
    return NoisyData(chi=traj.states + w, inputs=traj.inputs, w=w, w_max=w_max)


def run_qlearning_noisy(data: NoisyData, K0: np.ndarray, weights: CostWeights,
                        eps: float = 1e-10, max_iter: int = 50,
                        fixed_iterations: int | None = None,
                        audit_system: LinearSystem | None = None) -> QLearningResult:
    """The learning loop on measured data.

    Identical to the clean loop, built on the stacked vectors
    ``[chi_k; u_k]``; with w_max = 0 the result is bitwise identical to the
    clean path.  The regressor can only be certified a posteriori here, so
    independence failures surface as singular-regressor errors.
    """
    ld = LearningData.from_trajectory(data.measured_trajectory())
    return run_qlearning(ld, K0, weights, eps=eps, max_iter=max_iter,
                         fixed_iterations=fixed_iterations,
                         audit_system=audit_system)


def noise_increments(w: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Increment sequence ``wbar_k = w_{k+1} - A w_k`` (harness only).

    Structured noise with w_{k+1} = A w_k yields identically zero
    increments and is invisible to the learning equations.
    """
    w = np.asarray(w, dtype=float)
    A = np.asarray(A, dtype=float)
    if w.ndim != 2 or A.shape != (w.shape[1], w.shape[1]):
        raise DimensionError(
            f"need noise (N, n) and A (n, n), got {w.shape} and {A.shape}")
    return w[1:] - w[:-1] @ A.T


def epsilon_term(theta_hat: QTheta, K: np.ndarray, z_hat: np.ndarray,
                 wbar: np.ndarray, S: np.ndarray) -> float:
    """Noise contribution of one sample to the measured-data equation.

    Evaluates ``wbar' Kbar' T Kbar wbar + 2 zhat' S' Kbar' T Kbar wbar``
    with ``Kbar = [I; -K]`` and ``S = [A, B]`` (harness only: S needs the
    true plant).
    """
    K = np.asarray(K, dtype=float)
    m, n = K.shape
    kbar = np.vstack([np.eye(n), -K])
    T = theta_hat.theta
    right = kbar.T @ T @ kbar @ np.asarray(wbar, dtype=float)
    quad = float(np.asarray(wbar) @ right)
    cross = 2.0 * float(np.asarray(z_hat) @ (np.asarray(S).T @ right))
    return quad + cross


@dataclass(frozen=True)
class MarginResult:
    """Outcome of a stability-margin evaluation."""

    lhs: float
    lambda_min: float
    ok: bool


def _margin_sum(data: NoisyData, coeff: float, s_norm_bound: float,
                wbar_bounds: np.ndarray) -> float:
    n, m = data.n, data.m
    eta = eta_dim(n, m)
    Z = np.hstack([data.chi[:eta], data.inputs[:eta]])
    V_hat = quad_monomial_rows(Z).T
    smin = np.linalg.svd(V_hat, compute_uv=False)[-1]
    if smin == 0.0:
        raise DdlqrError("monomial matrix of the measured data is singular")
    vinv = 1.0 / smin
    znorm = np.linalg.norm(Z, axis=1)
    wb = np.broadcast_to(np.asarray(wbar_bounds, dtype=float), (eta,))
    total = float(np.sum(coeff * wb**2 + 2.0 * s_norm_bound * coeff * znorm * wb))
    return np.sqrt(eta) * vinv * total


def stability_margin(data: NoisyData, theta_hat: QTheta, K: np.ndarray,
                     s_norm_bound: float, wbar_bounds,
                     weights: CostWeights) -> MarginResult:
    """Sufficient-condition check that the next improved gain stabilizes.

    Computes ``sqrt(eta) ||Vhat^{-1}|| sum_k(||T|| ||Kbar||^2 wbar_k^2 +
    2 ||S|| ||T|| ||Kbar||^2 ||zhat_k|| wbar_k)`` and compares it against
    the smallest eigenvalue of diag(Q, R).  The sum runs over the eta
    regressor rows.  Conservative by design; treat as a diagnostic.

    Args:
        data: Measured data batch.
        theta_hat: Kernel solved from the measured data at policy ``K``.
        K: The evaluated policy.
        s_norm_bound: Known upper bound on the spectral norm of [A, B].
        wbar_bounds: Scalar or per-sample bounds on the noise increments.
        weights: Cost weights (for the right-hand side).
    """
    K = np.asarray(K, dtype=float)
    kbar_sq = 1.0 + np.linalg.norm(K, 2) ** 2
    coeff = np.linalg.norm(theta_hat.theta, 2) * kbar_sq
    lhs = _margin_sum(data, coeff, s_norm_bound, wbar_bounds)
    lam = float(np.linalg.eigvalsh(weights.qbar)[0])
    return MarginResult(lhs=lhs, lambda_min=lam, ok=lhs < lam)


def stability_margin_refined(data: NoisyData, theta_hat_1: QTheta,
                             s_norm_bound: float, wbar_bounds,
                             weights: CostWeights) -> MarginResult:
    """Gain-independent variant of the margin check.

    Replaces the policy-dependent factor by the squared norm of the first
    kernel iterate, which uniformly bounds it once the weights satisfy
    diag(Q, R) > I; a single evaluation then covers every iteration while
    the kernels decrease monotonically.

    Raises:
        DimensionError: If the smallest eigenvalue of diag(Q, R) is not
            greater than 1.
    """
    lam = float(np.linalg.eigvalsh(weights.qbar)[0])
    if lam <= 1.0:
        raise DimensionError(
            "the refined margin requires diag(Q, R) > I "
            f"(smallest eigenvalue {lam:.6f})")
    coeff = np.linalg.norm(theta_hat_1.theta, 2) ** 2
    lhs = _margin_sum(data, coeff, s_norm_bound, wbar_bounds)
    return MarginResult(lhs=lhs, lambda_min=lam, ok=lhs < lam)


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial outcome of the noise study."""

    trial: int
    seed: int
    error_norm: float
    stabilizing: bool
    margin_lhs: float
    margin_ok: bool
    failure: str | None = None


@dataclass(frozen=True)
class NoiseStudy:
    """Aggregate outcome of a batch of noisy learning experiments.

    ``mean_error``/``max_error`` aggregate the trials whose final gain
    stabilizes the true plant; destabilizing outcomes are counted
    separately (their error norms are dominated by divergence, not noise).
    """

    w_max: float
    trials: tuple[TrialRecord, ...]
    mean_error: float
    max_error: float
    destabilized_count: int
    failed_count: int


def _noisy_trial(args: tuple) -> TrialRecord:
    (trial, seed, n, m, w_max, iterations, rho, amplitude, x0_scale) = args
    trial_rng = np.random.default_rng([seed, trial])
    sys = random_controllable_system(n, m, trial_rng,
                                     spectral_radius_bound=rho)
    weights = CostWeights.identity(n, m)
    kstar = lqr_gain(sys, weights, solve_dare(sys, weights))
    eta = eta_dim(n, m)
    x0 = trial_rng.uniform(-x0_scale, x0_scale, n)
    U = generate_pe_input(m, n + 1, eta + 1, trial_rng, amplitude=amplitude)
    clean = simulate(sys, x0, U)
    noisy = add_noise(clean, w_max, trial_rng)
    try:
        k0 = deadbeat_from_data(noisy.measured_trajectory())
        theta_1 = policy_evaluation(
            LearningData.from_trajectory(noisy.measured_trajectory()),
            k0, weights)
        s_norm = float(np.linalg.norm(np.hstack([sys.A, sys.B]), 2))
        wbar_bound = (1.0 + float(np.linalg.norm(sys.A, 2))) * w_max
        margin = stability_margin(noisy, theta_1, k0, s_norm, wbar_bound, weights)
        result = run_qlearning_noisy(noisy, k0, weights,
                                     fixed_iterations=iterations)
    except DdlqrError as exc:
        return TrialRecord(trial=trial, seed=seed, error_norm=float("nan"),
                           stabilizing=False, margin_lhs=float("nan"),
                           margin_ok=False, failure=str(exc))
    err = float(np.linalg.norm(kstar - result.gain, 2))
    stab = spectral_radius(closed_loop(sys, result.gain)) < 1.0
    return TrialRecord(trial=trial, seed=seed, error_norm=err,
                       stabilizing=stab, margin_lhs=margin.lhs,
                       margin_ok=margin.ok)


def noisy_experiment(n: int, m: int, w_max: float, trials: int,
                     iterations: int, seed: int,
                     spectral_radius_bound: float = STUDY_SPECTRAL_RADIUS,
                     excitation_amplitude: float = STUDY_EXCITATION_AMPLITUDE,
                     x0_scale: float = STUDY_X0_SCALE,
                     jobs: int = 1) -> NoiseStudy:
    """Monte-Carlo study of learning accuracy under measurement noise.

    Each trial draws a fresh plant, computes the exact regulator gain as
    the scoring reference, runs one excitation experiment, corrupts the
    measured states, designs the initial gain and runs the fixed-count
    noisy learning loop from the corrupted data alone, and records the
    gain error, whether the learned gain stabilizes the true plant, and
    the first-iteration margin diagnostic.

    Per-trial RNG streams are derived from (seed, trial), so results do
    not depend on scheduling; ``jobs > 1`` runs trials in a process pool.

    Args:
        n, m: Plant dimensions.
        w_max: Componentwise noise bound.
        trials: Number of independent trials.
        iterations: Learning iterations per trial (fixed count).
        seed: Master seed.
        spectral_radius_bound: Ensemble normalization (see README).
        excitation_amplitude: Input amplitude for the experiments.
        x0_scale: Half-width of the uniform initial-state draw.
        jobs: Worker processes (1 = run in-process).

    Raises:
        DimensionError: On nonpositive parameters.
    """
    if trials < 1 or iterations < 1:
        raise DimensionError("trials and iterations must be positive")
    arglist = [(t, seed, n, m, w_max, iterations, spectral_radius_bound,
                excitation_amplitude, x0_scale) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_noisy_trial, arglist))
    else:
        records = [_noisy_trial(a) for a in arglist]
    good = [r.error_norm for r in records if r.stabilizing]
    failed = sum(1 for r in records if r.failure is not None)
    destab = sum(1 for r in records if not r.stabilizing) - failed
    return NoiseStudy(
        w_max=w_max,
        trials=tuple(records),
        mean_error=float(np.mean(good)) if good else float("nan"),
        max_error=float(np.max(good)) if good else float("nan"),
        destabilized_count=destab,
        failed_count=failed,
    )
