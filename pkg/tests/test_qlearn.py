import json

import numpy as np
import pytest

from ddlqr import (CostWeights, DimensionError, LearningData, LinearSystem,
                   PhiMatrix, QTheta, SingularRegressorError, build_regressor,
                   closed_loop, collect_learning_data, deadbeat_from_data,
                   eta_dim, generate_pe_input, lqr_gain, policy_evaluation,
                   policy_improvement, quad_monomial_rows,
                   random_controllable_system, run_qlearning, simulate,
                   solve_dare, solve_dlyap, spectral_radius, theta_star)

GOLDEN = (1 + np.sqrt(5)) / 2

SCALAR = LinearSystem([[1.0]], [[1.0]])
SCALAR_W = CostWeights.identity(1, 1)


def _scalar_data(seed=7):
    return collect_learning_data(SCALAR, [0.5], seed=seed)


def _pipeline_data(n, m, seed, radius=0.95):
    sys = random_controllable_system(n, m, seed=seed,
                                     spectral_radius_bound=radius)
    rng = np.random.default_rng(seed + 10_000)
    eta = eta_dim(n, m)
    u = generate_pe_input(m, n + 1, eta + 1, rng)
    traj = simulate(sys, rng.uniform(-1, 1, n), u)
    return sys, traj, LearningData.from_trajectory(traj)


def test_eta_sample_counts():
    assert eta_dim(3, 2) == 15
    data = collect_learning_data(random_controllable_system(3, 2, seed=1),
                                 np.zeros(3), seed=2)
    assert data.z.shape == (16, 5)
    assert data.x_next.shape == (15, 3)
    assert eta_dim(1, 1) == 3
    assert eta_dim(5, 2) == 28


def test_learning_data_requires_pe_input():
    sys = random_controllable_system(2, 1, seed=3)
    traj = simulate(sys, np.ones(2), np.ones((eta_dim(2, 1) + 1, 1)))
    with pytest.raises(SingularRegressorError):
        LearningData.from_trajectory(traj)


def test_learning_data_warns_on_parallel_pair():
    sys = LinearSystem([[0.0]], [[1.0]])  # x_{k+1} = u_k
    eta = eta_dim(1, 1)
    u = generate_pe_input(1, 2, eta + 1, seed=5)
    traj = simulate(sys, [u[0, 0]], u)  # z_0 duplicates the input pattern
    # force an exactly repeated stacked sample
    X = traj.states[:eta + 1].copy()
    U = u.copy()
    X[3], U[3] = X[1], U[1]
    from ddlqr import Trajectory
    rigged = Trajectory(inputs=U, states=X)
    with pytest.warns(UserWarning):
        LearningData.from_trajectory(rigged, require_pe=False)


def test_regressor_column_vanishes_when_policy_reproduces_sample():
    # contrived scalar case: x_{k+1} = x_k and u_k = -K x_{k+1} make the
    # lifted difference zero
    n = m = 1
    eta = eta_dim(n, m)
    K = np.array([[0.5]])
    Z = np.vstack([[1.0, -0.5], [2.0, 1.0], [0.5, 0.3], [1.5, -2.0]])
    x_next = np.array([[1.0], [0.7], [1.1]])
    data = LearningData(z=Z, x_next=x_next, n=n, m=m)
    V, C = build_regressor(data, K, SCALAR_W)
    np.testing.assert_allclose(V[:, 0], 0.0, atol=1e-14)
    assert np.all(C >= 0.0)


def test_regressor_rhs_positive_on_nonzero_samples():
    _, _, data = _pipeline_data(3, 2, seed=11)
    V, C = build_regressor(data, np.zeros((2, 3)), CostWeights.identity(3, 2))
    assert np.all(C > 0.0)
    assert V.shape == (15, 15)
    assert np.linalg.cond(V) < 1e12


def test_policy_evaluation_matches_lyapunov_oracle_scalar():
    data = _scalar_data()
    K = np.array([[1.0]])
    theta = policy_evaluation(data, K, SCALAR_W)
    oracle = solve_dlyap(PhiMatrix.from_gain(SCALAR, K), SCALAR_W.qbar)
    np.testing.assert_allclose(theta.theta, oracle.theta, atol=1e-8)


def test_policy_evaluation_fixed_point_at_optimum():
    sys, _, data = _pipeline_data(3, 2, seed=13)
    w = CostWeights.identity(3, 2)
    k_star = lqr_gain(sys, w, solve_dare(sys, w))
    theta = policy_evaluation(data, k_star, w)
    np.testing.assert_allclose(policy_improvement(theta), k_star, atol=1e-8)


def test_policy_evaluation_detects_duplicate_samples():
    _, _, data = _pipeline_data(2, 1, seed=17)
    Z = data.z.copy()
    Xn = data.x_next.copy()
    Z[2] = Z[1]
    Xn[2] = Xn[1]
    rigged = LearningData(z=Z, x_next=Xn, n=2, m=1)
    with pytest.raises(SingularRegressorError):
        policy_evaluation(rigged, np.zeros((1, 2)), CostWeights.identity(2, 1))


def test_policy_improvement_cases():
    assert policy_improvement(QTheta(theta=np.array([[2.0, 1.0], [1.0, 2.0]]),
                                     n=1, m=1))[0, 0] == pytest.approx(0.5)
    block = QTheta(theta=np.diag([5.0, 4.0, 2.0]), n=2, m=1)
    np.testing.assert_allclose(policy_improvement(block), np.zeros((1, 2)))
    t_star = theta_star(SCALAR, SCALAR_W, solve_dare(SCALAR, SCALAR_W))
    assert policy_improvement(t_star)[0, 0] == pytest.approx(1 / GOLDEN, abs=1e-12)


def test_run_qlearning_scalar_converges():
    data = _scalar_data()
    res = run_qlearning(data, np.array([[1.0]]), SCALAR_W, eps=1e-12)
    assert res.iterations <= 8
    assert res.converged
    assert res.gain[0, 0] == pytest.approx(1 / GOLDEN, abs=1e-10)


def test_run_qlearning_stops_at_fixed_point():
    sys, _, data = _pipeline_data(2, 2, seed=19)
    w = CostWeights.identity(2, 2)
    k_star = lqr_gain(sys, w, solve_dare(sys, w))
    res = run_qlearning(data, k_star, w)
    assert res.iterations == 1
    np.testing.assert_allclose(res.gain, k_star, atol=1e-8)


def test_run_qlearning_reaches_oracle_accuracy():
    sys, traj, data = _pipeline_data(3, 2, seed=23)
    w = CostWeights.identity(3, 2)
    k_db = deadbeat_from_data(traj)
    res = run_qlearning(data, k_db, w, fixed_iterations=10)
    k_star = lqr_gain(sys, w, solve_dare(sys, w))
    assert np.linalg.norm(res.gain - k_star, 2) <= 1e-10


def test_data_driven_evaluation_equals_model_based():
    # the central equivalence: on exciting data the lifted solve recovers
    # the exact Lyapunov kernel of the evaluated policy, every iteration
    for seed in (41, 43):
        sys, traj, data = _pipeline_data(4, 2, seed=seed)
        w = CostWeights.identity(4, 2)
        K = deadbeat_from_data(traj)
        for _ in range(6):
            theta = policy_evaluation(data, K, w)
            oracle = solve_dlyap(PhiMatrix.from_gain(sys, K), w.qbar)
            gap = np.linalg.norm(theta.theta - oracle.theta)
            assert gap <= 1e-7 * (1 + np.linalg.norm(oracle.theta))
            K = policy_improvement(theta)


def test_iterates_stay_stabilizing_monotone_and_above_optimum():
    sys, traj, data = _pipeline_data(3, 2, seed=47)
    w = CostWeights.identity(3, 2)
    t_star = theta_star(sys, w, solve_dare(sys, w)).theta
    res = run_qlearning(data, deadbeat_from_data(traj), w,
                        fixed_iterations=8, audit_system=sys)
    prev = None
    for rec in res.diagnostics.records:
        assert rec.closed_loop_radius < 1.0
        assert rec.min_eig_theta > 0.0
        if rec.monotone_gap is not None:
            assert rec.monotone_gap >= -1e-9
    assert np.linalg.eigvalsh(res.theta.theta - t_star)[0] >= -1e-9


def test_monomial_matrix_invertible_for_generic_vectors():
    # eta lifted vectors stay independent when n+m of the base vectors are
    # independent and no pair is parallel
    rng = np.random.default_rng(53)
    for d in range(2, 8):
        eta = d * (d + 1) // 2
        Z = rng.normal(size=(eta, d))
        lifted = quad_monomial_rows(Z)
        assert np.linalg.matrix_rank(lifted) == eta
        assert np.linalg.cond(lifted) < 1e10


def test_kernel_scales_with_cost_gain_does_not():
    _, traj, data = _pipeline_data(2, 1, seed=59)
    w1 = CostWeights.identity(2, 1)
    w5 = CostWeights(Q=5.0 * np.eye(2), R=5.0 * np.eye(1))
    K = deadbeat_from_data(traj)
    t1 = policy_evaluation(data, K, w1)
    t5 = policy_evaluation(data, K, w5)
    np.testing.assert_allclose(t5.theta, 5.0 * t1.theta, rtol=1e-9)
    np.testing.assert_allclose(policy_improvement(t5), policy_improvement(t1),
                               atol=1e-10)


def test_run_report_schema_and_round_trip():
    data = _scalar_data()
    res = run_qlearning(data, np.array([[1.0]]), SCALAR_W, fixed_iterations=4)
    report = res.report()
    assert set(report) == {"n", "m", "eta", "iterations", "final_gain",
                           "final_theta", "per_iteration", "wall_time_seconds"}
    assert report["iterations"] == 4
    assert len(report["per_iteration"]) == 4
    assert set(report["per_iteration"][0]) == {"gain_delta", "cond_V",
                                               "min_eig_theta", "monotone_gap"}
    blob = json.dumps(report)
    back = json.loads(blob)
    assert back["final_gain"] == report["final_gain"]


def test_run_qlearning_rejects_bad_gain_shape():
    data = _scalar_data()
    with pytest.raises(DimensionError):
        run_qlearning(data, np.ones((2, 1)), SCALAR_W)


def test_error_carries_iteration_index():
    _, _, data = _pipeline_data(2, 1, seed=61)
    Z = data.z.copy()
    Xn = data.x_next.copy()
    Z[2], Xn[2] = Z[1], Xn[1]  # rank-deficient by construction
    rigged = LearningData(z=Z, x_next=Xn, n=2, m=1)
    with pytest.raises(SingularRegressorError) as err:
        run_qlearning(rigged, np.zeros((1, 2)), CostWeights.identity(2, 1),
                      fixed_iterations=5)
    assert err.value.iteration == 0
    assert "iteration" in str(err.value)
