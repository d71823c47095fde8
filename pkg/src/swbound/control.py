"""Switching state feedback with a certified closed-loop cost bound.

The controller carries one gain per graph node and plays u = K_v x where v
minimizes x^T P_v x. The design inequalities, one per edge (v, w, i),

    P_v - Q - K_v^T R K_v - (A_i + B_i K_v)^T P_w (A_i + B_i K_v) >= 0,

make V(x) = min_v x^T P_v x an upper bound on the accumulated cost under
arbitrary switching, because a complete graph offers a successor node for
every mode. The inequalities are bilinear in (P, K) but become linear after
the congruence with S_v = P_v^{-1} and the substitution Y_v = K_v S_v: each
edge turns into one block inequality of size 3n + m,

    [ S_v                (A_i S_v + B_i Y_v)^T   S_v      Y_v^T ]
    [ A_i S_v + B_i Y_v  S_w                     0        0     ]
    [ S_v                0                       Q^{-1}   0     ]  >= 0,
    [ Y_v                0                       0        R^{-1}]

by Schur complement. Gains are recovered as K_v = Y_v S_v^{-1}.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .bounds import Certificate
from .graphs import LabeledGraph, is_complete
from .sdp import (
    MatrixVar,
    Objective,
    ScalarVar,
    SdpProblem,
    SolveOptions,
    SymExpr,
    solve,
)
from .system import QuadCost, SwitchedSystem

__all__ = [
    "SynthesisError",
    "Controller",
    "SynthesisResult",
    "ClosedLoopReport",
    "assemble_synthesis_lmis",
    "synthesize",
    "recover_controller",
    "apply_policy",
    "closed_loop_check",
    "save_controller",
    "load_controller",
]

MIN_S_EIG = 1e-6


class SynthesisError(Exception):
    """Synthesis failed; message carries solver or conditioning diagnostics."""


@dataclass
class Controller:
    """Node-indexed gains on top of a min-combined certificate."""

    cert: Certificate
    K: dict

    def __post_init__(self):
        if self.cert.combiner != "min":
            raise ValueError("controller certificates combine with min")
        missing = set(self.cert.graph.nodes) - set(self.K)
        if missing:
            raise ValueError(f"controller missing gains for {sorted(missing)}")
        self.K = {v: np.asarray(self.K[v], float) for v in self.cert.graph.nodes}

    def residual(self, sys: SwitchedSystem, cost: QuadCost) -> float:
        """Worst violation of the design inequalities; 0.0 when feasible."""
        worst = 0.0
        P = self.cert.P
        for v in self.cert.graph.nodes:
            worst = max(worst, -float(np.linalg.eigvalsh(P[v]).min()))
        for src, dst, i in self.cert.graph.edges:
            Kv = self.K[src]
            Acl = sys.A[i - 1] + sys.B[i - 1] @ Kv
            mat = P[src] - cost.Q - Kv.T @ cost.R @ Kv - Acl.T @ P[dst] @ Acl
            worst = max(worst, -float(np.linalg.eigvalsh(mat).min()))
        return worst

    def is_feasible(self, sys, cost, tol: float = 1e-6) -> bool:
        return self.residual(sys, cost) <= tol


@dataclass(frozen=True)
class SynthesisResult:
    status: str
    objective: str
    objective_value: float | None
    controller: Controller | None
    bound: float | None = None  # pointwise objective only
    per_node: dict | None = None


@dataclass(frozen=True)
class ClosedLoopReport:
    ok: bool
    checked: int
    worst_margin: float  # min over samples of V(x) + tol - J_H(x)
    worst_x: np.ndarray | None


def apply_policy(ctrl: Controller, x):
    """Input and active node at state x."""
    node = ctrl.cert.pick_node(x)
    return ctrl.K[node] @ np.asarray(x, float), node


def _sname(v) -> str:
    return f"S[{v}]"


def _yname(v, r, c) -> str:
    return f"Y[{v}][{r},{c}]"


def _inv_pd(M: np.ndarray, name: str) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    if w.min() <= 0.0:
        raise ValueError(f"{name} must be positive definite to synthesize")
    if w.max() / w.min() > 1e12:
        warnings.warn(f"{name} has condition number {w.max() / w.min():.2e}")
    return U @ np.diag(1.0 / w) @ U.T


def _check_controlled(sys: SwitchedSystem, cost: QuadCost, graph: LabeledGraph):
    if sys.B is None:
        raise ValueError("synthesis needs input matrices B")
    if cost.R is None:
        raise ValueError("synthesis needs an input cost R")
    if graph.num_modes != sys.num_modes:
        raise ValueError("graph and system disagree on the number of modes")
    if not is_complete(graph):
        raise ValueError("synthesis needs a complete graph")


def assemble_synthesis_lmis(
    sys: SwitchedSystem, cost: QuadCost, graph: LabeledGraph
) -> SdpProblem:
    """Variables S_v (symmetric) and Y_v (entrywise scalars), one block per edge.

    Every S_v also gets a floor S_v >= MIN_S_EIG I so that recovered P = S^{-1}
    stays bounded.
    """
    _check_controlled(sys, cost, graph)
    n, m = sys.n, sys.m
    D = 3 * n + m
    Qinv = _inv_pd(cost.Q, "Q")
    Rinv = _inv_pd(cost.R, "R")

    problem = SdpProblem()
    for v in graph.nodes:
        problem.matrix_vars.append(MatrixVar(_sname(v), n))
        for r in range(m):
            for c in range(n):
                problem.scalar_vars.append(ScalarVar(_yname(v, r, c)))

    # selectors for the four block rows
    G1 = np.zeros((n, D))
    G1[:, :n] = np.eye(n)
    G2 = np.zeros((n, D))
    G2[:, n : 2 * n] = np.eye(n)
    E2 = G2.T
    E3 = np.zeros((D, n))
    E3[2 * n : 3 * n, :] = np.eye(n)

    for src, dst, i in graph.edges:
        A, B = sys.A[i - 1], sys.B[i - 1]
        const = np.zeros((D, D))
        const[2 * n : 3 * n, 2 * n : 3 * n] = Qinv
        const[3 * n :, 3 * n :] = Rinv
        con = SymExpr(D, constant=const, label=f"{src}-{i}->{dst}")
        con.add_congruence(_sname(src), G1)
        con.add_congruence(_sname(dst), G2)
        con.add_pair(_sname(src), E2 @ A, G1)  # A S at block (2,1)
        con.add_pair(_sname(src), E3, G1)  # S at block (3,1)
        for r in range(m):
            for c in range(n):
                C = np.zeros((D, D))
                C[n : 2 * n, c] += B[:, r]  # B Y lands in block (2,1)
                C[c, n : 2 * n] += B[:, r]
                C[3 * n + r, c] += 1.0  # Y itself in block (4,1)
                C[c, 3 * n + r] += 1.0
                con.add_scalar(_yname(src, r, c), C)
        problem.psd_constraints.append(con)

    for v in graph.nodes:
        floor = SymExpr(n, constant=-MIN_S_EIG * np.eye(n), label=f"floor:{v}")
        floor.add_congruence(_sname(v), np.eye(n))
        problem.psd_constraints.append(floor)
    return problem


def _solution_logdet(values: dict, nodes) -> float:
    total = 0.0
    for v in nodes:
        sign, ld = np.linalg.slogdet(values[_sname(v)])
        if sign <= 0:
            return -np.inf
        total += ld
    return total


def _combine(a: dict, b: dict, s: float) -> dict:
    return {k: (1.0 - s) * a[k] + s * b[k] for k in a}


def synthesize(
    sys: SwitchedSystem,
    cost: QuadCost,
    graph: LabeledGraph,
    objective: str = "surrogate_volume",
    x0=None,
    options: SolveOptions | None = None,
    fw_max_iters: int = 60,
    fw_tol: float = 1e-8,
) -> SynthesisResult:
    """Solve the synthesis program and recover gains.

    Objectives: "surrogate_volume" maximizes sum trace(S_v), a linear proxy
    for large inverse matrices; "logdet" maximizes sum log det(S_v) (the
    volume objective proper) by conditional-gradient ascent from the
    surrogate optimum, each step one linear-objective solve plus an exact
    line search on the concave objective; "pointwise" needs x0 and minimizes
    the certified bound min_v x0^T S_v^{-1} x0 by solving one epigraph
    program per node and keeping the best.
    """
    options = options or SolveOptions()
    problem = assemble_synthesis_lmis(sys, cost, graph)
    nodes = graph.nodes

    if objective == "surrogate_volume":
        problem.objective = Objective(
            "max", matrix_coeffs={_sname(v): np.eye(sys.n) for v in nodes}
        )
        sol = solve(problem, options)
        if sol.status != "optimal":
            raise SynthesisError(f"synthesis returned {sol.status}: {sol.message}")
        ctrl = recover_controller(sys, cost, graph, sol.values)
        return SynthesisResult("optimal", objective, sol.objective_value, ctrl)

    if objective == "logdet":
        problem.objective = Objective(
            "max", matrix_coeffs={_sname(v): np.eye(sys.n) for v in nodes}
        )
        sol = solve(problem, options)
        if sol.status != "optimal":
            raise SynthesisError(f"synthesis returned {sol.status}: {sol.message}")
        cur = sol.values
        cur_obj = _solution_logdet(cur, nodes)
        for _ in range(fw_max_iters):
            grads = {}
            for v in nodes:
                S = 0.5 * (cur[_sname(v)] + cur[_sname(v)].T)
                grads[_sname(v)] = np.linalg.inv(S)
            problem.objective = Objective("max", matrix_coeffs=grads)
            sol = solve(problem, options)
            if sol.status != "optimal":
                break  # keep the last good iterate
            # exact line search: objective is concave along the segment
            lo, hi = 0.0, 1.0
            for _ in range(50):
                s1 = lo + (hi - lo) / 3.0
                s2 = hi - (hi - lo) / 3.0
                f1 = _solution_logdet(_combine(cur, sol.values, s1), nodes)
                f2 = _solution_logdet(_combine(cur, sol.values, s2), nodes)
                if f1 < f2:
                    lo = s1
                else:
                    hi = s2
            step = 0.5 * (lo + hi)
            nxt = _combine(cur, sol.values, step)
            nxt_obj = _solution_logdet(nxt, nodes)
            if not np.isfinite(nxt_obj) or nxt_obj <= cur_obj + fw_tol * (1 + abs(cur_obj)):
                break
            cur, cur_obj = nxt, nxt_obj
        ctrl = recover_controller(sys, cost, graph, cur)
        return SynthesisResult("optimal", objective, cur_obj, ctrl)

    if objective == "pointwise":
        if x0 is None:
            raise ValueError("pointwise objective needs x0")
        x0 = np.asarray(x0, float).reshape(sys.n)
        best = None
        per_node = {}
        for gamma in nodes:
            sub = assemble_synthesis_lmis(sys, cost, graph)
            sub.scalar_vars.append(ScalarVar("t", lower=0.0))
            # t >= x0^T S_gamma^{-1} x0 via its Schur block
            const = np.zeros((sys.n + 1, sys.n + 1))
            const[: sys.n, sys.n] = x0
            const[sys.n, : sys.n] = x0
            blk = SymExpr(sys.n + 1, constant=const, label=f"epi:{gamma}")
            Gp = np.zeros((sys.n, sys.n + 1))
            Gp[:, : sys.n] = np.eye(sys.n)
            blk.add_congruence(_sname(gamma), Gp)
            Et = np.zeros((sys.n + 1, sys.n + 1))
            Et[sys.n, sys.n] = 1.0
            blk.add_scalar("t", Et)
            sub.psd_constraints.append(blk)
            sub.objective = Objective("min", scalar_coeffs={"t": 1.0})
            sol = solve(sub, options)
            if sol.status != "optimal":
                per_node[gamma] = None
                continue
            per_node[gamma] = sol.objective_value
            if best is None or sol.objective_value < best[0]:
                best = (sol.objective_value, sol.values)
        if best is None:
            raise SynthesisError("pointwise synthesis failed at every node")
        ctrl = recover_controller(sys, cost, graph, best[1])
        return SynthesisResult(
            "optimal", objective, best[0], ctrl, bound=best[0], per_node=per_node
        )

    raise ValueError(f"unknown objective {objective!r}")


def recover_controller(
    sys: SwitchedSystem,
    cost: QuadCost,
    graph: LabeledGraph,
    values: dict,
    feas_tol: float = 1e-6,
) -> Controller:
    """Invert the S blocks and undo the Y substitution.

    Refuses when some S_v is within MIN_S_EIG/2 of singular, since the
    inverse would amplify solver noise past the feasibility tolerance.
    Inversion noise that leaks into the design inequalities is repaired by
    inflating every P_v by 2 res / lambda_min(Q), which restores feasibility
    (the slack gained on the Q + K^T R K term dominates the scaled violation)
    at the price of the same relative increase in the certified bound.
    """
    P = {}
    K = {}
    for v in graph.nodes:
        S = values[_sname(v)]
        S = 0.5 * (S + S.T)
        w, U = np.linalg.eigh(S)
        if w.min() <= MIN_S_EIG / 2:
            raise SynthesisError(
                f"S[{v}] is numerically singular: eigenvalues in "
                f"[{w.min():.3e}, {w.max():.3e}], condition "
                f"{w.max() / max(w.min(), 1e-300):.3e}"
            )
        Pv = U @ np.diag(1.0 / w) @ U.T
        P[v] = 0.5 * (Pv + Pv.T)
        Y = np.array(
            [[values[_yname(v, r, c)] for c in range(sys.n)] for r in range(sys.m)]
        )
        K[v] = Y @ P[v]
    cert = Certificate(graph, P, "min", objective="synthesis")
    ctrl = Controller(cert, K)
    res = ctrl.residual(sys, cost)
    if res > 1e-4:
        raise SynthesisError(f"recovered gains violate the inequalities by {res:.2e}")
    if res > 0.0:
        delta = 2.0 * res / float(np.linalg.eigvalsh(cost.Q).min())
        cert = Certificate(
            graph, {v: (1.0 + delta) * P[v] for v in graph.nodes}, "min",
            objective="synthesis",
        )
        ctrl = Controller(cert, K)
        res = ctrl.residual(sys, cost)
    if res > feas_tol:
        warnings.warn(f"recovered controller is feasible only to {res:.2e}")
    return ctrl


def closed_loop_check(
    ctrl: Controller,
    sys: SwitchedSystem,
    cost: QuadCost,
    samples: int = 50,
    seed: int = 0,
    H_max: int = 12,
    tol: float = 1e-6,
) -> ClosedLoopReport:
    """Exhaustive confirmation that V bounds the closed-loop cost.

    For each sampled unit state the oracle enumerates every switching
    sequence to depth H_max; the accumulated cost is nondecreasing in H, so
    checking the deepest value covers all horizons.
    """
    from .oracle import closed_loop_oracle

    rng = np.random.default_rng(seed)
    worst = float("inf")
    worst_x = None
    for _ in range(samples):
        x = rng.standard_normal(sys.n)
        x /= np.linalg.norm(x)
        res = closed_loop_oracle(ctrl, sys, cost, x, H=H_max)
        margin = ctrl.cert.evaluate(x) + tol * (1 + res.value) - res.value
        if margin < worst:
            worst = margin
            worst_x = x
    return ClosedLoopReport(ok=worst >= 0.0, checked=samples, worst_margin=worst, worst_x=worst_x)


def save_controller(ctrl: Controller, path) -> None:
    data = {
        "combiner": ctrl.cert.combiner,
        "objective": ctrl.cert.objective,
        "objective_value": ctrl.cert.objective_value,
        "graph": {
            "num_modes": ctrl.cert.graph.num_modes,
            "nodes": list(ctrl.cert.graph.nodes),
            "edges": [list(e) for e in ctrl.cert.graph.edges],
        },
        "P": {v: ctrl.cert.P[v].tolist() for v in ctrl.cert.graph.nodes},
        "K": {v: ctrl.K[v].tolist() for v in ctrl.cert.graph.nodes},
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)


def load_controller(path) -> Controller:
    with open(path) as fh:
        data = json.load(fh)
    g = data["graph"]
    graph = LabeledGraph(
        num_modes=g["num_modes"],
        nodes=tuple(g["nodes"]),
        edges=tuple((s, d, int(i)) for s, d, i in g["edges"]),
    )
    P = {v: np.asarray(m, float) for v, m in data["P"].items()}
    cert = Certificate(
        graph, P, data["combiner"], data.get("objective", ""), data.get("objective_value")
    )
    K = {v: np.asarray(m, float) for v, m in data["K"].items()}
    return Controller(cert, K)
