"""Tightness factor: multiplier programs, decomposition agreement, sandwich."""

import numpy as np
import pytest

from swbound.bounds import Certificate, solve_upper_bound
from swbound.graphs import build_debruijn
from swbound.oracle import value_oracle
from swbound.system import QuadCost, SwitchedSystem
from swbound.tightness import (
    TightnessCapacityError,
    compute_tightness,
    sandwich_check,
    tightness_max,
    tightness_min,
)

# factors for the planar pair's trace certificates, pinned to 6 decimals
MAX_CASE_MU = {1: 1.072992, 2: 1.003955, 3: 1.000154}
MIN_CASE_MU = {1: 2.861142, 2: 2.588103}


def max_cert(sys, cost, order):
    g = build_debruijn(order, sys.num_modes, dual=True)
    return solve_upper_bound(sys, cost, g).certificate


def min_cert(sys, cost, order):
    g = build_debruijn(order, sys.num_modes)
    return solve_upper_bound(sys, cost, g).certificate


def test_single_mode_certificate_is_tight():
    # one mode, trace-minimal P makes the decay inequality an equality
    sys = SwitchedSystem(A=(np.array([[0.6, 0.1], [0.0, 0.5]]),))
    cost = QuadCost(Q=np.eye(2))
    cert = max_cert(sys, cost, 1)
    res = compute_tightness(cert, sys, cost)
    assert res.mu == pytest.approx(1.0, abs=1e-6)


def test_max_case_values_and_decrease(planar_sys, planar_cost):
    mus = {}
    for order, want in MAX_CASE_MU.items():
        cert = max_cert(planar_sys, planar_cost, order)
        res = compute_tightness(cert, planar_sys, planar_cost)
        assert res.case == "max"
        assert res.mu == pytest.approx(want, abs=1e-4)
        assert res.residual >= -1e-6
        mus[order] = res.mu
    assert mus[3] < mus[2] < mus[1]


def test_min_case_values(planar_sys, planar_cost):
    for order, want in MIN_CASE_MU.items():
        cert = min_cert(planar_sys, planar_cost, order)
        res = compute_tightness(cert, planar_sys, planar_cost)
        assert res.case == "min"
        assert res.mu == pytest.approx(want, abs=1e-4)
        assert res.residual >= -1e-6


def test_modes_agree_max(planar_sys, planar_cost):
    cert = max_cert(planar_sys, planar_cost, 2)
    mono = tightness_max(cert, planar_sys, planar_cost, mode="monolithic")
    dec = tightness_max(cert, planar_sys, planar_cost, mode="decomposed")
    assert mono.mode == "monolithic" and dec.mode == "decomposed"
    assert dec.mu == pytest.approx(mono.mu, abs=1e-6)
    assert dec.num_blocks == mono.num_blocks


def test_modes_agree_min(planar_sys, planar_cost):
    cert = min_cert(planar_sys, planar_cost, 1)
    mono = tightness_min(cert, planar_sys, planar_cost, mode="monolithic")
    dec = tightness_min(cert, planar_sys, planar_cost, mode="decomposed")
    assert dec.mu == pytest.approx(mono.mu, abs=1e-6)


def test_multipliers_reconstruct_feasible_blocks(planar_sys, planar_cost):
    # rebuild one max-case constraint from the returned multipliers and check
    # it is PSD at the returned mu
    cert = max_cert(planar_sys, planar_cost, 1)
    res = compute_tightness(cert, planar_sys, planar_cost)
    S = cert.graph.nodes
    P = cert.P
    N = {
        (v, i): planar_sys.A[i - 1].T @ P[v] @ planar_sys.A[i - 1]
        for v in S
        for i in (1, 2)
    }
    by_block = {}
    for key, t in res.multipliers.items():
        by_block.setdefault(key[:3], []).append((key[3:], t))
        assert t >= -1e-12
    for g in S:
        for a in S:
            for i in (1, 2):
                mat = res.mu * planar_cost.Q + N[(a, i)] - P[g]
                for bj, t in by_block.get((g, a, i), []):
                    mat = mat + t * (N[bj] - N[(a, i)])
                assert np.linalg.eigvalsh(mat).min() >= -1e-6


def test_wrong_combiner_is_rejected(planar_sys, planar_cost):
    cert = max_cert(planar_sys, planar_cost, 1)
    with pytest.raises(ValueError):
        tightness_min(cert, planar_sys, planar_cost)
    mcert = min_cert(planar_sys, planar_cost, 1)
    with pytest.raises(ValueError):
        tightness_max(mcert, planar_sys, planar_cost)


def test_min_case_capacity(planar_sys, planar_cost):
    # the min-case block count grows like |S|^2 M |S|^M; order 4 with two
    # modes crosses the default cap without solving anything
    g = build_debruijn(4, 2)
    cert = Certificate(g, {v: np.eye(2) for v in g.nodes}, "min")
    with pytest.raises(TightnessCapacityError):
        tightness_min(cert, planar_sys, planar_cost)


def test_sandwich_check(planar_sys, planar_cost):
    cert = max_cert(planar_sys, planar_cost, 2)
    res = compute_tightness(cert, planar_sys, planar_cost)
    report = sandwich_check(cert, res, planar_sys, planar_cost, samples=20, seed=5)
    assert report.ok
    assert report.checked > 0
    assert report.worst_lower_margin >= 0.0
    assert report.worst_upper_margin >= 0.0


def test_mu_certifies_lower_bound(planar_sys, planar_cost):
    # direct oracle confirmation on a few states, independent of sandwich_check
    cert = max_cert(planar_sys, planar_cost, 1)
    res = compute_tightness(cert, planar_sys, planar_cost)
    rng = np.random.default_rng(6)
    for _ in range(5):
        x = rng.standard_normal(2)
        x /= np.linalg.norm(x)
        j = value_oracle(planar_sys, planar_cost, x, certificate=cert)
        assert j.stabilized
        v = cert.evaluate(x)
        assert v / res.mu <= j.value + 1e-5
        assert j.value <= v + 1e-5
