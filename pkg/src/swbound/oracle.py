"""Brute-force reference values for worst-case switching costs.

The truncated value J_H(x) = max over mode sequences of the H-stage cost is
computed by level-synchronous enumeration of the switching tree with
branch-and-bound. Pruning never changes any reported value: a branch is cut
only when its accumulated cost plus a valid upper bound on every possible
continuation cannot reach the running maximum, and since stage costs are
nonnegative the per-horizon maxima J_k stay exact for every k. The default
continuation bound is certificate-free (a geometric bound from short
matrix-product norms); a certificate value function may optionally be supplied
to sharpen pruning once it has passed its own feasibility checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import QuadCost, SwitchedSystem

__all__ = [
    "OracleResult",
    "OracleCapacityError",
    "value_oracle",
    "closed_loop_oracle",
]

DEFAULT_MAX_HORIZON = 40
DEFAULT_MAX_FRONTIER = 1_000_000
_PRODUCT_ENUM_CAP = 20_000


class OracleCapacityError(Exception):
    """Enumeration frontier exceeded its cap before pruning could contain it."""


@dataclass(frozen=True)
class OracleResult:
    """Truncated worst-case cost at one state.

    values_by_horizon[k-1] holds J_k for k = 1..H. stabilized means the last
    increment fell below tail_tol * (1 + J_H) or, when a certificate was
    supplied, the bracket max(acc + V) - J_H closed below the same threshold.
    """

    x: np.ndarray
    H: int
    value: float
    worst_sequence: tuple[int, ...]
    stabilized: bool
    values_by_horizon: np.ndarray


def _contraction_tail_coefficient(maps, cost_gain: float) -> float:
    """Coefficient C such that the worst remaining cost from x is <= C * ||x||^2.

    Searches for a block length r <= 3 with g_r = max norm over all length-r
    products < 1; then the stage costs are dominated by a geometric series:
    sum <= cost_gain * (sum_{s<r} b_s^2) / (1 - g_r^2) * ||x||^2, with b_s the
    max norm over length-s products. Returns inf when no such r is found
    within the enumeration cap (pruning is then disabled).
    """
    b = [1.0]
    prods = [np.eye(maps[0].shape[0])]
    for r in range(1, 4):
        if len(prods) * len(maps) > _PRODUCT_ENUM_CAP:
            break
        prods = [a @ p for a in maps for p in prods]
        g_r = max(np.linalg.norm(p, 2) for p in prods)
        if g_r < 1.0:
            prefix = sum(b[s] ** 2 for s in range(r))
            return cost_gain * prefix / (1.0 - g_r**2)
        b.append(g_r)
    return float("inf")


def _certificate_value_fn(cert):
    """Batched V(x) evaluator from a certificate-like object or callable."""
    if cert is None:
        return None
    if callable(cert):
        return cert
    P = np.stack([cert.P[v] for v in cert.graph.nodes])
    reduce = np.max if cert.combiner == "max" else np.min

    def fn(states: np.ndarray) -> np.ndarray:
        vals = np.einsum("fi,aij,fj->fa", states, P, states)
        return reduce(vals, axis=1)

    return fn


def _run_enumeration(
    x0,
    expand,
    tail_coef: float,
    value_fn,
    H_max: int,
    tail_tol: float,
    adaptive: bool,
    max_frontier: int,
) -> OracleResult:
    """Exact worst-case enumeration, one tree level per iteration.

    expand(states) -> (stage_costs (F,), children (num_modes*F, n)); child
    block m*F..(m+1)*F-1 applies mode m+1 to every frontier state.
    """
    if H_max < 1:
        raise ValueError("horizon must be >= 1")
    x0 = np.asarray(x0, float)
    states = x0[None, :]
    acc = np.zeros(1)
    seqs = np.zeros((1, 0), dtype=np.uint16)
    running = 0.0
    J: list[float] = []
    stabilized = False
    final_acc, final_seqs = acc, seqs
    k = 0
    while k < H_max:
        k += 1
        F = states.shape[0]
        stage, children = expand(states)
        num_modes = children.shape[0] // F
        child_acc = np.tile(acc + stage, num_modes)
        new_seqs = np.empty((num_modes * F, k), dtype=np.uint16)
        if k > 1:
            new_seqs[:, : k - 1] = np.tile(seqs, (num_modes, 1))
        new_seqs[:, k - 1] = np.repeat(np.arange(1, num_modes + 1, dtype=np.uint16), F)
        final_acc, final_seqs = child_acc, new_seqs

        prev = running
        running = max(running, float(child_acc.max()))
        J.append(running)

        # valid upper bound on any continuation cost from each child state
        bound = np.full(children.shape[0], np.inf)
        if np.isfinite(tail_coef):
            bound = tail_coef * np.einsum("fi,fi->f", children, children)
        if value_fn is not None:
            bound = np.minimum(bound, value_fn(children))

        if adaptive:
            threshold = tail_tol * (1.0 + running)
            if (k > 1 and running - prev < threshold) or running == 0.0:
                stabilized = True
                break
            bracket = float(np.max(child_acc + bound, initial=running)) - running
            if bracket < threshold:
                stabilized = True
                break

        keep = child_acc + bound >= running
        states = children[keep]
        acc = child_acc[keep]
        seqs = new_seqs[keep]
        if states.shape[0] > max_frontier:
            raise OracleCapacityError(
                f"frontier {states.shape[0]} exceeds cap {max_frontier} at depth {k}"
            )
        if states.shape[0] == 0:
            stabilized = True
            break

    if not adaptive and len(J) >= 1:
        increment = J[-1] - (J[-2] if len(J) > 1 else 0.0)
        stabilized = increment < tail_tol * (1.0 + J[-1])

    # stage costs are nonnegative, so the final level's maximum equals J_H and
    # is attained by a surviving (never-pruned) leaf
    worst = tuple(int(i) for i in final_seqs[int(np.argmax(final_acc))])
    return OracleResult(
        x=x0,
        H=k,
        value=J[-1] if J else 0.0,
        worst_sequence=worst,
        stabilized=stabilized,
        values_by_horizon=np.asarray(J),
    )


def value_oracle(
    sys: SwitchedSystem,
    cost: QuadCost,
    x,
    H: int | None = None,
    tail_tol: float = 1e-6,
    certificate=None,
    max_frontier: int = DEFAULT_MAX_FRONTIER,
    max_horizon: int = DEFAULT_MAX_HORIZON,
) -> OracleResult:
    """Truncated worst-case cost J_H(x) of the autonomous system, exact.

    With H=None the horizon grows adaptively (up to max_horizon) and stops
    once the increment or the certificate bracket falls below
    tail_tol * (1 + J). An explicit H runs exactly H stages. certificate
    (optional, validated by the caller beforehand) sharpens pruning; it never
    changes returned values.
    """
    if sys.B is not None:
        raise ValueError("value_oracle expects an autonomous system")
    A = np.stack(sys.A)
    Q = cost.Q
    tail_coef = _contraction_tail_coefficient(
        list(sys.A), float(np.linalg.eigvalsh(Q).max())
    )

    def expand(states):
        stage = np.einsum("fi,ij,fj->f", states, Q, states)
        children = np.einsum("mij,fj->mfi", A, states).reshape(-1, sys.n)
        return stage, children

    return _run_enumeration(
        x,
        expand,
        tail_coef,
        _certificate_value_fn(certificate),
        H_max=H if H is not None else max_horizon,
        tail_tol=tail_tol,
        adaptive=H is None,
        max_frontier=max_frontier,
    )


def closed_loop_oracle(
    controller,
    sys: SwitchedSystem,
    cost: QuadCost,
    x,
    H: int | None = None,
    tail_tol: float = 1e-6,
    use_certificate: bool = False,
    max_frontier: int = DEFAULT_MAX_FRONTIER,
    max_horizon: int = DEFAULT_MAX_HORIZON,
) -> OracleResult:
    """Worst-case closed-loop cost under x+ = (A_i + B_i K_kappa(x)) x.

    The policy picks kappa(x) = argmin_alpha x^T P_alpha x (lowest index on
    ties); the adversary picks the mode sequence; stage cost x^T Q x + u^T R u.
    """
    if sys.B is None:
        raise ValueError("closed_loop_oracle expects a controlled system")
    if cost.R is None:
        raise ValueError("closed-loop cost needs R")
    nodes = controller.cert.graph.nodes
    P = np.stack([controller.cert.P[v] for v in nodes])
    K = np.stack([controller.K[v] for v in nodes])
    A = np.stack(sys.A)
    B = np.stack(sys.B)
    Q, R = cost.Q, cost.R

    cost_gain = float(np.linalg.eigvalsh(Q).max()) + max(
        float(np.linalg.eigvalsh(k.T @ R @ k).max()) for k in K
    )
    loop_maps = [
        sys.A[i] + sys.B[i] @ K[a]
        for i in range(sys.num_modes)
        for a in range(len(nodes))
    ]
    tail_coef = _contraction_tail_coefficient(loop_maps, cost_gain)
    value_fn = _certificate_value_fn(controller.cert) if use_certificate else None

    def expand(states):
        quad = np.einsum("fi,aij,fj->fa", states, P, states)
        kappa = np.argmin(quad, axis=1)
        u = np.einsum("fmn,fn->fm", K[kappa], states)
        stage = np.einsum("fi,ij,fj->f", states, Q, states) + np.einsum(
            "fm,mp,fp->f", u, R, u
        )
        children = np.einsum("mij,fj->mfi", A, states) + np.einsum(
            "mip,fp->mfi", B, u
        )
        return stage, children.reshape(-1, sys.n)

    return _run_enumeration(
        x,
        expand,
        tail_coef,
        value_fn,
        H_max=H if H is not None else max_horizon,
        tail_tol=tail_tol,
        adaptive=H is None,
        max_frontier=max_frontier,
    )
