import numpy as np
import pytest

from ddlqr import (DimensionError, LinearSystem, Trajectory,
                   check_willems_rank, generate_pe_input, hankel,
                   is_persistently_exciting, no_parallel_pairs,
                   numerical_rank, random_controllable_system, simulate,
                   trajectory_from_data)


def test_constant_input_not_pe():
    u = np.ones((10, 1))
    assert not is_persistently_exciting(u, 2)


def test_short_binary_sequence_is_pe_order_2():
    u = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    # direct rank check of the 2 x 4 window matrix
    assert numerical_rank(hankel(u, 2)) == 2
    assert is_persistently_exciting(u, 2)


def test_random_input_pe_high_order():
    rng = np.random.default_rng(7)
    u = rng.uniform(-1, 1, (20, 2))
    assert is_persistently_exciting(u, 4)


def test_pe_rejects_bad_order():
    with pytest.raises(DimensionError):
        is_persistently_exciting(np.ones((5, 1)), 0)


def test_pe_too_short_is_false():
    u = np.array([[1.0], [-1.0]])
    assert not is_persistently_exciting(u, 2)  # needs N >= 3


def test_generate_pe_input_postcondition():
    u = generate_pe_input(1, 2, 3, seed=1)
    assert is_persistently_exciting(u, 2)


def test_generate_pe_input_rank_and_determinism():
    u = generate_pe_input(2, 4, 11, seed=5)
    assert numerical_rank(hankel(u, 4)) == 8
    again = generate_pe_input(2, 4, 11, seed=5)
    np.testing.assert_array_equal(u, again)
    assert np.abs(u).max() <= 1.0


def test_generate_pe_input_length_bound():
    with pytest.raises(DimensionError):
        generate_pe_input(2, 4, 10, seed=0)  # 10 < (2+1)*4 - 1 = 11


def test_pe_monotone_in_order():
    rng = np.random.default_rng(21)
    u = rng.uniform(-1, 1, (30, 2))
    orders = [L for L in range(1, 6) if is_persistently_exciting(u, L)]
    # PE of order L implies PE of any smaller order, so the set is a prefix
    assert orders == list(range(1, len(orders) + 1))


def test_willems_rank_small_cases():
    sys = random_controllable_system(2, 1, seed=3)
    u = generate_pe_input(1, 3, 12, seed=3)  # order n + L with L = 1
    traj = simulate(sys, np.array([0.3, -0.2]), u)
    assert check_willems_rank(traj, 1)

    big = random_controllable_system(3, 2, seed=4)
    u = generate_pe_input(2, 4, 14, seed=4)
    traj = simulate(big, np.zeros(3), u)
    stacked = np.vstack([traj.states[:traj.sample_count].T,
                         hankel(traj.inputs, 1)])
    assert numerical_rank(stacked) == 5
    assert check_willems_rank(traj, 1)


def test_willems_rank_fails_on_zero_data():
    sys = random_controllable_system(2, 1, seed=9)
    traj = simulate(sys, np.zeros(2), np.zeros((12, 1)))
    assert not check_willems_rank(traj, 1)


def test_willems_rank_ensemble():
    # excitation of order n + L must yield the full stacked rank every time
    rng = np.random.default_rng(100)
    for trial in range(50):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 3))
        L = int(rng.integers(1, 3))
        sys = random_controllable_system(n, m, rng)
        N = (m + 1) * (n + L) - 1 + int(rng.integers(0, 5))
        u = generate_pe_input(m, n + L, N, rng)
        traj = simulate(sys, rng.uniform(-1, 1, n), u)
        assert check_willems_rank(traj, L)


def test_trajectory_fit_self_window():
    sys = random_controllable_system(3, 1, seed=12)
    u = generate_pe_input(1, 3 + 2, 25, seed=12)
    traj = simulate(sys, np.array([1.0, 0.0, -1.0]), u)
    L = 2
    fit = trajectory_from_data(traj, L, traj.states[4:4 + L], traj.inputs[4:4 + L])
    assert fit.feasible
    assert fit.residual <= 1e-10


def test_trajectory_fit_same_system_new_run():
    sys = random_controllable_system(2, 1, seed=13)
    u = generate_pe_input(1, 2 + 3, 30, seed=13)
    traj = simulate(sys, np.array([0.5, 0.5]), u)
    other = simulate(sys, np.array([-2.0, 1.0]),
                     generate_pe_input(1, 5, 10, seed=99))
    L = 3
    fit = trajectory_from_data(traj, L, other.states[:L], other.inputs[:L])
    assert fit.feasible


def test_trajectory_fit_rejects_foreign_dynamics():
    sys = random_controllable_system(2, 1, seed=14)
    impostor = random_controllable_system(2, 1, seed=4141)
    u = generate_pe_input(1, 2 + 3, 30, seed=14)
    traj = simulate(sys, np.array([0.5, 0.5]), u)
    foreign = simulate(impostor, np.array([1.0, -1.0]),
                       generate_pe_input(1, 5, 10, seed=77))
    fit = trajectory_from_data(traj, 3, foreign.states[:3], foreign.inputs[:3])
    assert not fit.feasible


def test_no_parallel_pairs_random_data():
    sys = random_controllable_system(3, 2, seed=15)
    u = generate_pe_input(2, 4, 20, seed=15)
    traj = simulate(sys, np.array([1.0, 2.0, 3.0]), u)
    assert no_parallel_pairs(traj)


def test_no_parallel_pairs_detects_duplicates():
    states = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    inputs = np.array([[1.0], [2.0], [0.5]])  # rows 0 and 1 are parallel
    traj = Trajectory(inputs=inputs, states=states)
    assert not no_parallel_pairs(traj)


def test_no_parallel_pairs_detects_sign_flip():
    states = np.array([[1.0, 1.0], [-1.0, -1.0], [0.0, 1.0]])
    inputs = np.array([[0.5], [-0.5], [1.0]])
    traj = Trajectory(inputs=inputs, states=states)
    assert not no_parallel_pairs(traj)
