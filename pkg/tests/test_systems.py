import numpy as np
import pytest

from ddlqr import (DataFormatError, DimensionError, LinearSystem, Trajectory,
                   closed_loop, controllability_rank, load_system,
                   random_controllable_system, save_system, simulate,
                   spectral_radius)
from ddlqr.oracle import CostWeights, lqr_gain, solve_dare


def test_simulate_zero_dynamics_passes_input_through():
    sys = LinearSystem([[0.0]], [[1.0]])
    traj = simulate(sys, [0.0], [[1.0], [2.0]])
    np.testing.assert_array_equal(traj.states.ravel(), [0, 1, 2])


def test_simulate_identity_dynamics_zero_input():
    sys = LinearSystem([[1.0]], [[1.0]])
    traj = simulate(sys, [1.0], [[0.0], [0.0]])
    np.testing.assert_array_equal(traj.states.ravel(), [1, 1, 1])


def test_simulate_one_step_by_hand():
    sys = LinearSystem([[0.5, 0.0], [0.0, 0.5]], [[1.0], [0.0]])
    traj = simulate(sys, [2.0, 4.0], [[1.0]])
    np.testing.assert_allclose(traj.states, [[2, 4], [2, 2]])


def test_simulate_has_one_extra_state():
    sys = random_controllable_system(3, 2, seed=1)
    traj = simulate(sys, np.zeros(3), np.zeros((7, 2)))
    assert traj.states.shape == (8, 3)
    assert traj.has_terminal_state
    assert traj.sample_count == 7


def test_simulate_recheck_invariant():
    rng = np.random.default_rng(5)
    sys = random_controllable_system(4, 2, seed=9)
    traj = simulate(sys, rng.normal(size=4), rng.normal(size=(20, 2)))
    X, U = traj.states, traj.inputs
    for k in range(20):
        defect = np.linalg.norm(X[k + 1] - sys.A @ X[k] - sys.B @ U[k])
        assert defect <= 1e-12 * (1 + np.linalg.norm(X[k]))


def test_simulate_dimension_mismatch():
    sys = LinearSystem([[0.0]], [[1.0]])
    with pytest.raises(DimensionError):
        simulate(sys, [0.0, 1.0], [[1.0]])
    with pytest.raises(DimensionError):
        simulate(sys, [0.0], np.ones((3, 2)))


def test_random_system_deterministic():
    a = random_controllable_system(3, 2, seed=123)
    b = random_controllable_system(3, 2, seed=123)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.B, b.B)


def test_random_system_controllable_and_bounded():
    for seed in range(5):
        sys = random_controllable_system(5, 2, seed=seed)
        assert controllability_rank(sys) == 5
        assert np.abs(sys.A).max() <= 1.0
        assert np.abs(sys.B).max() <= 1.0


def test_random_system_spectral_normalization():
    sys = random_controllable_system(6, 2, seed=4, spectral_radius_bound=0.9)
    assert spectral_radius(sys.A) == pytest.approx(0.9, rel=1e-12)
    assert controllability_rank(sys) == 6


def test_spectral_radius_cases():
    assert spectral_radius(np.zeros((2, 2))) == 0.0
    assert spectral_radius(np.diag([0.5, -0.8])) == pytest.approx(0.8)
    assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == 0.0


def test_controllability_rank_cases():
    chain = LinearSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])
    assert controllability_rank(chain) == 2
    stuck = LinearSystem(np.eye(2), [[1.0], [0.0]])
    assert controllability_rank(stuck) == 1
    assert controllability_rank(random_controllable_system(4, 2, seed=8)) == 4


def test_closed_loop_cases():
    sys = random_controllable_system(3, 2, seed=2)
    np.testing.assert_array_equal(closed_loop(sys, np.zeros((2, 3))), sys.A)
    scalar = LinearSystem([[0.8]], [[2.0]])
    np.testing.assert_allclose(closed_loop(scalar, [[0.4]]), [[0.0]])
    with pytest.raises(DimensionError):
        closed_loop(sys, np.zeros((3, 2)))


def test_oracle_gain_stabilizes_closed_loop():
    sys = random_controllable_system(2, 1, seed=11)
    w = CostWeights.identity(2, 1)
    K = lqr_gain(sys, w, solve_dare(sys, w))
    assert spectral_radius(closed_loop(sys, K)) < 1.0


def test_trajectory_validation():
    with pytest.raises(DimensionError):
        Trajectory(inputs=np.ones((3, 1)), states=np.ones((5, 2)))
    t = Trajectory(inputs=np.ones((3, 1)), states=np.ones((3, 2)))
    assert not t.has_terminal_state
    assert (t.n, t.m) == (2, 1)


def test_system_file_round_trip(tmp_path):
    sys = random_controllable_system(3, 2, seed=33)
    path = tmp_path / "plant.txt"
    save_system(sys, str(path))
    loaded = load_system(str(path))
    np.testing.assert_array_equal(loaded.A, sys.A)
    np.testing.assert_array_equal(loaded.B, sys.B)


def test_system_file_parse_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 1\n1.0 0.0\n0.0 oops\n1.0\n0.0\n")
    with pytest.raises(DataFormatError) as err:
        load_system(str(bad))
    assert "3" in str(err.value)  # line number of the bad token

    short = tmp_path / "short.txt"
    short.write_text("2 1\n1.0 0.0\n")
    with pytest.raises(DataFormatError):
        load_system(str(short))


def test_system_immutable():
    sys = random_controllable_system(2, 1, seed=0)
    with pytest.raises(ValueError):
        sys.A[0, 0] = 99.0
