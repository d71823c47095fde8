"""Certified upper bounds on worst-case switching costs.

A certificate assigns one quadratic x^T P_v x to each node of a labeled graph
and combines them with max or min. Feasibility of the per-edge inequalities
P_src - Q - A_i^T P_dst A_i >= 0 makes the combined function dominate its own
one-step Bellman update, hence dominate the worst-case cost-to-go J(x) under
arbitrary switching. max combining is sound on co-complete graphs (every
node/label pair has an incoming edge), min combining on complete graphs
(every node/label pair has an outgoing edge).

Certificates come from two routes: a semidefinite program over the graph
(trace or pointwise objective), or a closed form on the dual De Bruijn graph
built from products of the system matrices, available whenever the length-
(l+1) products contract in the metric induced by the stage cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graphs import (
    GraphCapacityError,
    LabeledGraph,
    build_debruijn,
    debruijn_sequences,
    is_cocomplete,
    is_complete,
    is_path_complete,
    sequence_id,
)
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
    "NotPathCompleteError",
    "Certificate",
    "BoundResult",
    "BellmanReport",
    "assemble_bound_lmis",
    "solve_upper_bound",
    "check_bellman_upper",
    "compute_eta",
    "debruijn_analytic_certificate",
    "save_certificate",
    "load_certificate",
]

_PRODUCT_CAP = 20_000


class NotPathCompleteError(Exception):
    """The graph misses some switching sequence, so no bound can be certified."""

    def __init__(self, witness: tuple[int, ...]):
        self.witness = witness
        word = ",".join(str(i) for i in witness)
        super().__init__(f"graph is not path-complete; unreadable word ({word})")


@dataclass
class Certificate:
    """Graph-indexed family of quadratics whose combination dominates J.

    P maps node id to an n x n symmetric matrix; combiner is "max" or "min".
    objective records how the certificate was produced.
    """

    graph: LabeledGraph
    P: dict[str, np.ndarray]
    combiner: str
    objective: str = ""
    objective_value: float | None = None

    def __post_init__(self):
        if self.combiner not in ("max", "min"):
            raise ValueError("combiner must be 'max' or 'min'")
        missing = set(self.graph.nodes) - set(self.P)
        if missing:
            raise ValueError(f"certificate missing nodes {sorted(missing)}")
        self.P = {v: np.asarray(self.P[v], float) for v in self.graph.nodes}

    def evaluate(self, x) -> float:
        x = np.asarray(x, float)
        vals = [float(x @ self.P[v] @ x) for v in self.graph.nodes]
        return max(vals) if self.combiner == "max" else min(vals)

    def pick_node(self, x) -> str:
        """Node attaining the smallest quadratic at x; ties go to node order."""
        x = np.asarray(x, float)
        vals = [float(x @ self.P[v] @ x) for v in self.graph.nodes]
        return self.graph.nodes[int(np.argmin(vals))]

    def residual(self, sys: SwitchedSystem, cost: QuadCost) -> float:
        """Worst violation of the defining inequalities; 0.0 when feasible."""
        worst = 0.0
        for v in self.graph.nodes:
            worst = max(worst, -float(np.linalg.eigvalsh(self.P[v]).min()))
        for src, dst, i in self.graph.edges:
            Ai = sys.A[i - 1]
            slack = self.P[src] - cost.Q - Ai.T @ self.P[dst] @ Ai
            worst = max(worst, -float(np.linalg.eigvalsh(slack).min()))
        return worst

    def is_feasible(self, sys: SwitchedSystem, cost: QuadCost, tol: float = 1e-6) -> bool:
        return self.residual(sys, cost) <= tol


@dataclass(frozen=True)
class BoundResult:
    status: str  # optimal | infeasible | unbounded | numerical_failure | capacity
    combiner: str
    objective: str
    certificate: Certificate | None
    objective_value: float | None
    bound: float | None  # certified value at x0 for pointwise objectives
    solution: object = None
    per_node: dict | None = None


@dataclass(frozen=True)
class BellmanReport:
    ok: bool
    min_margin: float
    worst_x: np.ndarray | None


def _check_compatible(sys: SwitchedSystem, cost: QuadCost, graph: LabeledGraph) -> None:
    if sys.B is not None:
        raise ValueError("upper bounds apply to autonomous systems (no input matrices)")
    if cost.Q.shape != (sys.n, sys.n):
        raise ValueError("cost dimension does not match the system")
    if graph.num_modes != sys.num_modes:
        raise ValueError(
            f"graph labels {graph.num_modes} modes, system has {sys.num_modes}"
        )


def _gate_path_complete(graph: LabeledGraph, max_states: int) -> None:
    # complete and co-complete graphs trace every word by construction; the
    # subset search is only needed for anything else
    if is_complete(graph) or is_cocomplete(graph):
        return
    pc = is_path_complete(graph, max_states=max_states)
    if pc.status == "no":
        raise NotPathCompleteError(pc.witness)
    if pc.status == "unknown":
        raise GraphCapacityError(
            "path-completeness check hit its state cap; refusing to certify"
        )


def _select_combiner(graph: LabeledGraph, requested: str) -> str:
    co = is_cocomplete(graph)
    comp = is_complete(graph)
    if requested == "auto":
        if co:
            return "max"
        if comp:
            return "min"
        raise ValueError(
            "graph is neither complete nor co-complete; pick a different graph"
        )
    if requested == "max" and not co:
        raise ValueError("max combining is only sound on a co-complete graph")
    if requested == "min" and not comp:
        raise ValueError("min combining is only sound on a complete graph")
    if requested not in ("max", "min"):
        raise ValueError(f"unknown combiner {requested!r}")
    return requested


def _pname(v: str) -> str:
    return f"P[{v}]"


def assemble_bound_lmis(
    sys: SwitchedSystem, cost: QuadCost, graph: LabeledGraph
) -> SdpProblem:
    """Constraint system for the bound: per-edge decrease and per-node PSD."""
    problem = SdpProblem()
    eye = np.eye(sys.n)
    for v in graph.nodes:
        problem.matrix_vars.append(MatrixVar(_pname(v), sys.n))
        con = SymExpr(sys.n, label=f"psd:{v}")
        con.add_congruence(_pname(v), eye)
        problem.psd_constraints.append(con)
    for src, dst, i in graph.edges:
        con = SymExpr(sys.n, constant=-cost.Q, label=f"{src}-{i}->{dst}")
        con.add_congruence(_pname(src), eye)
        con.add_congruence(_pname(dst), sys.A[i - 1], coeff=-1.0)
        problem.psd_constraints.append(con)
    return problem


def _extract(graph: LabeledGraph, values: dict) -> dict:
    return {v: values[_pname(v)] for v in graph.nodes}


def solve_upper_bound(
    sys: SwitchedSystem,
    cost: QuadCost,
    graph: LabeledGraph,
    objective: str = "trace_sum",
    x0=None,
    combiner: str = "auto",
    options: SolveOptions | None = None,
    max_graph_states: int = 1_000_000,
) -> BoundResult:
    """Best certificate on the graph under the requested objective.

    objective "trace_sum" minimizes the summed traces of the P_v; "pointwise"
    minimizes the certified value at x0. With min combining the pointwise
    objective solves one program per node and keeps the smallest, since the
    combined value is not jointly convex in that case.
    """
    _check_compatible(sys, cost, graph)
    _gate_path_complete(graph, max_graph_states)
    comb = _select_combiner(graph, combiner)
    options = options or SolveOptions()

    if objective in ("trace_sum", "logdet_sum"):
        if x0 is not None:
            raise ValueError("x0 only applies to the pointwise objective")
    elif objective == "pointwise":
        if x0 is None:
            raise ValueError("pointwise objective needs x0")
        x0 = np.asarray(x0, float)
        if x0.shape != (sys.n,):
            raise ValueError(f"x0 must have shape ({sys.n},)")
    else:
        raise ValueError(f"unknown objective {objective!r}")

    problem = assemble_bound_lmis(sys, cost, graph)
    eye = np.eye(sys.n)

    if objective in ("trace_sum", "logdet_sum"):
        problem.objective = Objective(
            "min", matrix_coeffs={_pname(v): eye for v in graph.nodes}
        )
        sol = solve(problem, options)
        if sol.status != "optimal":
            return BoundResult(sol.status, comb, objective, None, None, None, sol)
        if objective == "logdet_sum":
            sol = _logdet_descent(problem, graph, sol, options)
            if sol.status != "optimal":
                return BoundResult(sol.status, comb, objective, None, None, None, sol)
        P = _extract(graph, sol.values)
        value = sol.objective_value
        if objective == "logdet_sum":
            value = float(sum(np.linalg.slogdet(P[v])[1] for v in graph.nodes))
        cert = Certificate(graph, P, comb, objective, value)
        return BoundResult("optimal", comb, objective, cert, value, None, sol)

    if comb == "max":
        # epigraph: every node value at x0 sits below t, minimize t
        problem.scalar_vars.append(ScalarVar("t"))
        col = x0.reshape(sys.n, 1)
        for v in graph.nodes:
            con = SymExpr(1, label=f"epi:{v}")
            con.add_scalar("t", np.ones((1, 1)))
            con.add_congruence(_pname(v), col, coeff=-1.0)
            problem.psd_constraints.append(con)
        problem.objective = Objective("min", scalar_coeffs={"t": 1.0})
        sol = solve(problem, options)
        if sol.status != "optimal":
            return BoundResult(sol.status, comb, objective, None, None, None, sol)
        cert = Certificate(
            graph, _extract(graph, sol.values), comb, objective, sol.objective_value
        )
        return BoundResult(
            "optimal",
            comb,
            objective,
            cert,
            sol.objective_value,
            sol.objective_value,
            sol,
        )

    # min combining: the certified value at x0 is min over nodes, so minimize
    # each node's quadratic separately and keep the best run
    W = np.outer(x0, x0)
    best: tuple[float, object] | None = None
    per_node: dict[str, float] = {}
    for v in graph.nodes:
        problem.objective = Objective("min", matrix_coeffs={_pname(v): W})
        sol = solve(problem, options)
        if sol.status != "optimal":
            return BoundResult(sol.status, comb, objective, None, None, None, sol)
        per_node[v] = sol.objective_value
        if best is None or sol.objective_value < best[0]:
            best = (sol.objective_value, sol)
    value, sol = best
    cert = Certificate(graph, _extract(graph, sol.values), comb, objective, value)
    return BoundResult("optimal", comb, objective, cert, value, value, sol, per_node)


def _logdet_descent(problem, graph, sol, options, max_rounds=100, tol=1e-9):
    """Iterated linearization of sum log det P_v, started from the trace point.

    log det is concave, so minimizing the tangent min sum <inv(P_k), P> at the
    current iterate decreases the true objective each round; the fixed point is
    a stationary point of the (nonconvex) log det program. Deterministic.
    """
    P = _extract(graph, sol.values)
    for _ in range(max_rounds):
        W = {}
        for v in graph.nodes:
            mat = P[v]
            W[_pname(v)] = np.linalg.inv(
                mat + 1e-9 * (1.0 + np.trace(mat)) * np.eye(mat.shape[0])
            )
        problem.objective = Objective("min", matrix_coeffs=W)
        new_sol = solve(problem, options)
        if new_sol.status != "optimal":
            return new_sol
        newP = _extract(graph, new_sol.values)
        delta = max(float(np.abs(newP[v] - P[v]).max()) for v in graph.nodes)
        P, sol = newP, new_sol
        if delta < tol:
            break
    return sol


def check_bellman_upper(
    cert: Certificate,
    sys: SwitchedSystem,
    cost: QuadCost,
    num_samples: int = 200,
    seed: int = 0,
    tol: float = 1e-7,
) -> BellmanReport:
    """Sampled check that V(x) >= x^T Q x + max_i V(A_i x) on the unit sphere."""
    rng = np.random.default_rng(seed)
    worst = float("inf")
    worst_x = None
    for _ in range(num_samples):
        x = rng.standard_normal(sys.n)
        x /= np.linalg.norm(x)
        v = cert.evaluate(x)
        step = max(cert.evaluate(a @ x) for a in sys.A)
        margin = (v - float(x @ cost.Q @ x) - step) / (1.0 + abs(v))
        if margin < worst:
            worst, worst_x = margin, x
    return BellmanReport(ok=worst >= -tol, min_margin=worst, worst_x=worst_x)


def _cost_sqrt_pair(Q: np.ndarray):
    w, U = np.linalg.eigh(Q)
    return U @ np.diag(np.sqrt(w)) @ U.T, U @ np.diag(1.0 / np.sqrt(w)) @ U.T


def compute_eta(
    sys: SwitchedSystem, cost: QuadCost, order: int, max_products: int = _PRODUCT_CAP
) -> float:
    """Worst gain of length-(order+1) mode products in the cost metric.

    eta is the smallest constant with Pi^T Q Pi <= eta Q over all ordered
    products Pi of order+1 system matrices. eta < 1 means every such product
    contracts, which is what the closed-form certificate needs.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    count = sys.num_modes ** (order + 1)
    if count > max_products:
        raise GraphCapacityError(
            f"{count} mode products exceed the cap {max_products}"
        )
    Qh, Qmh = _cost_sqrt_pair(cost.Q)
    prods = [np.eye(sys.n)]
    for _ in range(order + 1):
        prods = [a @ p for a in sys.A for p in prods]
    return max(float(np.linalg.norm(Qh @ p @ Qmh, 2) ** 2) for p in prods)


def debruijn_analytic_certificate(
    sys: SwitchedSystem,
    cost: QuadCost,
    order: int,
    max_products: int = _PRODUCT_CAP,
) -> Certificate:
    """Closed-form certificate on the dual De Bruijn graph of the given order.

    The node of a mode sequence (i_0 .. i_{l-1}) carries the cost accumulated
    along that sequence, sum_k Pi_k^T Q Pi_k with Pi_k = A_{i_{k-1}} .. A_{i_0},
    inflated by 1/(1 - eta) to absorb everything past the first l steps.
    Raises when eta >= 1 at this order.
    """
    if sys.B is not None:
        raise ValueError("upper bounds apply to autonomous systems (no input matrices)")
    if cost.Q.shape != (sys.n, sys.n):
        raise ValueError("cost dimension does not match the system")
    eta = compute_eta(sys, cost, order, max_products)
    if eta >= 1.0:
        raise ValueError(
            f"length-{order + 1} products do not contract (eta = {eta:.6g}); "
            "try a larger order"
        )
    graph = build_debruijn(order, sys.num_modes, dual=True)
    P: dict[str, np.ndarray] = {}
    for seq in debruijn_sequences(order, sys.num_modes):
        acc = cost.Q.copy()
        Pi = np.eye(sys.n)
        for mode in seq:
            Pi = sys.A[mode - 1] @ Pi
            acc = acc + Pi.T @ cost.Q @ Pi
        P[sequence_id(seq, sys.num_modes)] = acc / (1.0 - eta)
    return Certificate(graph, P, "max", "analytic")


def save_certificate(cert: Certificate, path) -> None:
    data = {
        "combiner": cert.combiner,
        "objective": cert.objective,
        "objective_value": cert.objective_value,
        "graph": {
            "num_modes": cert.graph.num_modes,
            "nodes": list(cert.graph.nodes),
            "edges": [list(e) for e in cert.graph.edges],
        },
        "P": {v: cert.P[v].tolist() for v in cert.graph.nodes},
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)


def load_certificate(path) -> Certificate:
    with open(path) as fh:
        data = json.load(fh)
    g = data["graph"]
    graph = LabeledGraph(
        num_modes=g["num_modes"],
        nodes=tuple(g["nodes"]),
        edges=tuple((s, d, int(i)) for s, d, i in g["edges"]),
    )
    P = {v: np.asarray(m, float) for v, m in data["P"].items()}
    return Certificate(
        graph, P, data["combiner"], data.get("objective", ""), data.get("objective_value")
    )
