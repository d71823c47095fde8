"""Brute-force worst-case oracle against closed forms and invariants."""

import numpy as np
import pytest

from swbound.bounds import Certificate, solve_upper_bound
from swbound.control import Controller
from swbound.graphs import LabeledGraph, build_debruijn
from swbound.oracle import OracleCapacityError, closed_loop_oracle, value_oracle
from swbound.system import QuadCost, SwitchedSystem


def scalar_system(*gains):
    return SwitchedSystem(A=tuple(np.array([[g]]) for g in gains))


def test_two_mode_scalar_closed_form():
    # worst signal always picks the larger squared gain: J = 1/(1 - 0.36)
    sys = scalar_system(0.5, -0.6)
    cost = QuadCost(Q=np.eye(1))
    res = value_oracle(sys, cost, np.array([1.0]), H=30)
    assert res.value == pytest.approx(1.0 / 0.64, abs=1e-6)
    assert res.stabilized  # geometric decay crosses the tail threshold by 30
    # the final mode only produces the uncosted terminal state, so skip it
    assert set(res.worst_sequence[:-1]) == {2}


def test_single_mode_geometric_sum():
    sys = scalar_system(0.5)
    cost = QuadCost(Q=np.eye(1))
    res = value_oracle(sys, cost, np.array([1.0]), H=40)
    assert res.stabilized
    assert res.value == pytest.approx(4.0 / 3.0, abs=1e-9)


def test_zero_dynamics_value_is_stage_cost():
    sys = SwitchedSystem(A=(np.zeros((2, 2)), np.zeros((2, 2))))
    cost = QuadCost(Q=np.array([[2.0, 0.5], [0.5, 1.0]]))
    x = np.array([1.0, -1.0])
    res = value_oracle(sys, cost, x)
    assert res.value == pytest.approx(float(x @ cost.Q @ x), abs=1e-9)
    assert res.stabilized


def test_values_by_horizon_monotone(planar_sys, planar_cost):
    x = np.array([0.3, -0.9])
    res = value_oracle(planar_sys, planar_cost, x, H=10)
    vals = res.values_by_horizon
    assert len(vals) == 10
    assert np.all(np.diff(vals) >= -1e-12)
    assert res.value == pytest.approx(vals[-1])


def test_sign_symmetry(planar_sys, planar_cost):
    x = np.array([0.7, 0.4])
    a = value_oracle(planar_sys, planar_cost, x, H=8)
    b = value_oracle(planar_sys, planar_cost, -x, H=8)
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert a.worst_sequence == b.worst_sequence


def test_explicit_horizon_runs_exactly_h(planar_sys, planar_cost):
    res = value_oracle(planar_sys, planar_cost, np.array([1.0, 0.0]), H=5)
    assert res.H == 5
    assert len(res.worst_sequence) == 5


def test_certificate_pruning_never_changes_values(planar_sys, planar_cost):
    g = build_debruijn(1, 2, dual=True)
    cert = solve_upper_bound(
        planar_sys, planar_cost, g, objective="trace_sum"
    ).certificate
    rng = np.random.default_rng(4)
    for _ in range(5):
        x = rng.standard_normal(2)
        x /= np.linalg.norm(x)
        plain = value_oracle(planar_sys, planar_cost, x, H=12)
        pruned = value_oracle(planar_sys, planar_cost, x, H=12, certificate=cert)
        assert pruned.value == pytest.approx(plain.value, rel=1e-12)
        np.testing.assert_allclose(
            pruned.values_by_horizon, plain.values_by_horizon, rtol=1e-12
        )


def test_rotation_never_stabilizes():
    theta = 0.7
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    sys = SwitchedSystem(A=(rot,))
    res = value_oracle(sys, QuadCost(Q=np.eye(2)), np.array([1.0, 0.0]), H=12)
    assert not res.stabilized
    assert res.value == pytest.approx(12.0, abs=1e-9)  # unit norm every stage


def test_capacity_cap_raises():
    # two rotations give the pruner no contraction to work with, so the
    # frontier doubles every stage until it trips the cap
    def rot(theta):
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s], [s, c]])

    sys = SwitchedSystem(A=(rot(0.3), rot(1.1)))
    with pytest.raises(OracleCapacityError):
        value_oracle(sys, QuadCost(Q=np.eye(2)), np.array([1.0, 0.0]), H=12, max_frontier=100)


def test_rejects_controlled_systems(controlled_sys, controlled_cost):
    with pytest.raises(ValueError):
        value_oracle(controlled_sys, controlled_cost, np.array([1.0, 0.0]))


def single_node_controller(K, P=None):
    g = LabeledGraph(num_modes=1, nodes=("0",), edges=(("0", "0", 1),))
    cert = Certificate(g, {"0": np.eye(1) if P is None else P}, "min")
    return Controller(cert=cert, K={"0": np.asarray(K, float)})


def test_scalar_closed_loop_value():
    # x+ = 2x - 1.5x = 0.5x, stage (1 + 1.5^2) x^2: total 3.25/(1-0.25) = 13/3
    sys = SwitchedSystem(A=(np.array([[2.0]]),), B=(np.array([[1.0]]),))
    cost = QuadCost(Q=np.eye(1), R=np.eye(1))
    ctrl = single_node_controller([[-1.5]])
    res = closed_loop_oracle(ctrl, sys, cost, np.array([1.0]), H=40)
    assert res.value == pytest.approx(13.0 / 3.0, abs=1e-6)


def test_zero_gain_reduces_to_autonomous(planar_sys, planar_cost):
    sysB = SwitchedSystem(A=planar_sys.A, B=(np.eye(2), np.eye(2)))
    costR = QuadCost(Q=planar_cost.Q, R=np.eye(2))
    g = build_debruijn(1, 2)
    cert = Certificate(g, {v: np.eye(2) for v in g.nodes}, "min")
    ctrl = Controller(cert=cert, K={v: np.zeros((2, 2)) for v in g.nodes})
    x = np.array([0.6, 0.8])
    a = closed_loop_oracle(ctrl, sysB, costR, x, H=8)
    b = value_oracle(planar_sys, planar_cost, x, H=8)
    assert a.value == pytest.approx(b.value, rel=1e-12)
