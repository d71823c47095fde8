"""System containers, simulation helpers, random benchmark generator, JSON IO."""

import numpy as np
import pytest

from swbound.system import (
    QuadCost,
    SwitchedSystem,
    load_system,
    random_stable_system,
    rollout,
    save_system,
    step,
)


def test_shapes_and_properties(controlled_sys):
    assert controlled_sys.n == 2
    assert controlled_sys.m == 1
    assert controlled_sys.num_modes == 2


def test_autonomous_has_no_input_dim(planar_sys):
    assert planar_sys.B is None
    assert planar_sys.m == 0


def test_validation_rejects_bad_shapes():
    with pytest.raises(ValueError):
        SwitchedSystem(A=(np.zeros((2, 3)),))
    with pytest.raises(ValueError):
        SwitchedSystem(A=())
    with pytest.raises(ValueError):
        SwitchedSystem(A=(np.eye(2), np.eye(3)))
    with pytest.raises(ValueError):
        SwitchedSystem(A=(np.eye(2), np.eye(2)), B=(np.ones((2, 1)),))
    with pytest.raises(ValueError):
        SwitchedSystem(A=(np.eye(2),), B=(np.ones((3, 1)),))


def test_cost_validation():
    with pytest.raises(ValueError):
        QuadCost(Q=np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        QuadCost(Q=np.zeros((2, 2)))  # only semidefinite
    cost = QuadCost(Q=2.0 * np.eye(2), R=3.0 * np.eye(1))
    x = np.array([1.0, 1.0])
    u = np.array([2.0])
    assert cost.stage(x) == pytest.approx(4.0)
    assert cost.stage(x, u) == pytest.approx(4.0 + 12.0)
    with pytest.raises(ValueError):
        QuadCost(Q=np.eye(2)).stage(x, u)


def test_step_matches_matrix_action(controlled_sys):
    x = np.array([1.0, -2.0])
    u = np.array([0.5])
    got = step(controlled_sys, x, 2, u)
    want = controlled_sys.A[1] @ x + controlled_sys.B[1] @ u
    np.testing.assert_allclose(got, want)
    with pytest.raises(ValueError):
        step(controlled_sys, x, 3)


def test_rollout_accumulates_stage_costs(planar_sys, planar_cost):
    x0 = np.array([1.0, 0.0])
    traj = rollout(planar_sys, planar_cost, x0, modes=(1, 2, 1))
    assert traj.states.shape == (4, 2)
    assert traj.modes == (1, 2, 1)
    np.testing.assert_allclose(
        traj.cumulative_cost, traj.stage_costs.sum(), rtol=1e-12
    )
    # recompute by hand
    x = x0
    total = 0.0
    for i in (1, 2, 1):
        total += float(x @ planar_cost.Q @ x)
        x = planar_sys.A[i - 1] @ x
    assert traj.cumulative_cost == pytest.approx(total)
    np.testing.assert_allclose(traj.states[-1], x)


def test_random_generator_norm_is_exact():
    for n, M, seed in ((2, 2, 0), (5, 3, 1), (8, 2, 2)):
        sys = random_stable_system(n, M, seed=seed)
        worst = max(np.linalg.norm(a, 2) for a in sys.A)
        assert worst == pytest.approx(0.9, abs=1e-12)
    scalar = random_stable_system(1, 1, seed=3)
    assert abs(scalar.A[0][0, 0]) == pytest.approx(0.9, abs=1e-12)


def test_random_generator_is_deterministic():
    a = random_stable_system(3, 2, seed=42)
    b = random_stable_system(3, 2, seed=42)
    for x, y in zip(a.A, b.A):
        np.testing.assert_array_equal(x, y)
    c = random_stable_system(3, 2, seed=43)
    assert any(not np.array_equal(x, y) for x, y in zip(a.A, c.A))


def test_random_generator_rejects_bad_norm():
    with pytest.raises(ValueError):
        random_stable_system(2, 2, seed=0, spectral_norm=1.0)


def test_save_load_round_trip(tmp_path, controlled_sys, controlled_cost):
    path = tmp_path / "sys.json"
    save_system(controlled_sys, controlled_cost, path)
    sys2, cost2 = load_system(path)
    for a, b in zip(controlled_sys.A, sys2.A):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(controlled_sys.B, sys2.B):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(controlled_cost.Q, cost2.Q)
    np.testing.assert_array_equal(controlled_cost.R, cost2.R)


def test_save_load_autonomous(tmp_path, planar_sys, planar_cost):
    path = tmp_path / "sys.json"
    save_system(planar_sys, planar_cost, path)
    sys2, cost2 = load_system(path)
    assert sys2.B is None
    assert cost2.R is None
    for a, b in zip(planar_sys.A, sys2.A):
        np.testing.assert_array_equal(a, b)
