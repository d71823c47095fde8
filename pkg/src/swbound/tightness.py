"""Relative accuracy factors: the smallest mu with V/mu <= J <= V.

Scaling a certified upper bound V down by mu makes it a lower bound on the
worst-case cost once V(x) <= mu c(x) + max_i V(A_i x) holds everywhere. For
quadratic pieces that condition is relaxed to one matrix inequality per index
block via nonnegative multipliers; mu and the multipliers enter linearly, so
the smallest mu is a semidefinite program with the P matrices as fixed data.

The program decomposes exactly: blocks share only mu, and each block's
feasible mu-set is an upward-closed interval [mu_min(block), inf) because
adding (delta mu) Q >= 0 preserves feasibility. Hence the joint optimum equals
max over blocks of mu_min(block), and blocks can be solved independently and
pruned at two levels. First, setting a single multiplier to one swaps the
(alpha, i) successor term for any other (beta, j), so every block of a given
gamma is feasible at
ub(gamma) = max(1, min_{beta,j} lam_max(Q^{-1/2}(P_gamma - A_j^T P_beta A_j)Q^{-1/2}));
groups whose ub cannot beat the incumbent maximum are skipped outright and
their blocks certified with that transfer multiplier. Second, for groups that
survive, one block-sized SDP restricted to simplex coefficient vectors (a
subset of every block's feasible multipliers) bounds the whole group at once;
only groups whose simplex optimum still beats the incumbent get their blocks
solved individually.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .bounds import Certificate
from .sdp import Objective, ScalarVar, SdpProblem, SolveOptions, SymExpr, solve
from .system import QuadCost, SwitchedSystem

__all__ = [
    "TightnessError",
    "TightnessCapacityError",
    "TightnessResult",
    "SandwichReport",
    "tightness_max",
    "tightness_min",
    "compute_tightness",
    "sandwich_check",
]

MIN_CASE_CAP = 20_000
MONOLITHIC_MULTIPLIER_CAP = 3_000


class TightnessError(Exception):
    """The scaling program failed to solve (solver diagnostics attached)."""


class TightnessCapacityError(Exception):
    """Index-set size exceeds the configured cap; reported before assembly."""


@dataclass(frozen=True)
class TightnessResult:
    """Certified scaling factor with the multipliers that witness it.

    multipliers holds the nonzero entries only, keyed by the constraint index
    tuple; in the min case the keys are prefixed ("t", ...) / ("s", ...) to
    separate the two families. residual is the worst (most negative)
    constraint eigenvalue at the returned values, after any repair.
    num_solved counts solver calls (per-block and group-relaxation SDPs), so
    it can exceed num_blocks on small decomposed instances.
    """

    mu: float
    case: str  # "max" or "min"
    multipliers: dict
    residual: float
    mode: str  # "monolithic" or "decomposed"
    num_blocks: int
    num_solved: int


@dataclass(frozen=True)
class SandwichReport:
    ok: bool
    checked: int
    inconclusive: int
    worst_lower_margin: float  # min over samples of J_H + tol - V/mu
    worst_upper_margin: float  # min over samples of V + tol - J_H


def _fixed_data(cert: Certificate, sys: SwitchedSystem, cost: QuadCost):
    S = cert.graph.nodes
    P = cert.P
    N = {
        (v, i): sys.A[i - 1].T @ P[v] @ sys.A[i - 1]
        for v in S
        for i in range(1, sys.num_modes + 1)
    }
    w, U = np.linalg.eigh(cost.Q)
    Qmh = U @ np.diag(1.0 / np.sqrt(w)) @ U.T
    # G[gamma][(beta, j)] = smallest mu certifying block gamma via one
    # transfer multiplier on (beta, j)
    G = {
        g: {
            bj: float(np.linalg.eigvalsh(Qmh @ (P[g] - N[bj]) @ Qmh).max())
            for bj in N
        }
        for g in S
    }
    return S, P, N, G


def _check_case(cert: Certificate, case: str) -> None:
    if cert.combiner != case:
        raise ValueError(f"certificate combines with {cert.combiner}, need {case}")


def _tname(idx) -> str:
    return "t[" + "|".join(str(k) for k in idx) + "]"


def _sname(idx) -> str:
    return "s[" + "|".join(str(k) for k in idx) + "]"


def _max_block_terms(gamma, alpha, i, S, N, num_modes):
    mults = [
        (beta, j)
        for beta in S
        for j in range(1, num_modes + 1)
        if (beta, j) != (alpha, i)
    ]
    return mults


def _min_block_terms(gamma, alpha, i, omega, S, num_modes):
    tm = [j for j in range(1, num_modes + 1) if (omega[j - 1], j) != (alpha, i)]
    sm = [zeta for zeta in S if zeta != gamma]
    return tm, sm


def _constraint_max(gamma, alpha, i, P, N, Q, mults):
    base = N[(alpha, i)] - P[gamma]
    con = SymExpr(P[gamma].shape[0], constant=base, label=f"{gamma}|{alpha}|{i}")
    con.add_scalar("mu", Q)
    for beta, j in mults:
        con.add_scalar(_tname((gamma, alpha, i, beta, j)), N[(beta, j)] - N[(alpha, i)])
    return con


def _solve_max_block(gamma, alpha, i, P, N, Q, S, num_modes, options):
    mults = _max_block_terms(gamma, alpha, i, S, N, num_modes)
    problem = SdpProblem()
    problem.scalar_vars.append(ScalarVar("mu", lower=1.0))
    for beta, j in mults:
        problem.scalar_vars.append(ScalarVar(_tname((gamma, alpha, i, beta, j)), lower=0.0))
    problem.psd_constraints.append(_constraint_max(gamma, alpha, i, P, N, Q, mults))
    problem.objective = Objective("min", scalar_coeffs={"mu": 1.0})
    sol = solve(problem, options)
    if sol.status != "optimal":
        raise TightnessError(
            f"block ({gamma},{alpha},{i}) returned {sol.status}: {sol.message}"
        )
    t = {}
    for beta, j in mults:
        val = sol.values[_tname((gamma, alpha, i, beta, j))]
        if val > 1e-12:
            t[(gamma, alpha, i, beta, j)] = val
    return sol.values["mu"], t


def _solve_max_group_relaxation(gamma, P, N, Q, row, options):
    """One block-sized SDP bounding every block of the group at once.

    Restricting a block's coefficient vector (1 - sum t on its own term, t on
    the others) to the simplex gives a feasible set shared by all blocks of
    the group, so min mu over the simplex dominates each block's minimum. The
    simplex solution also converts to feasible multipliers for every block.
    row is the group's single-transfer bound table G[gamma].
    """
    keys = list(N)
    base = min(keys, key=row.get)
    problem = SdpProblem()
    problem.scalar_vars.append(ScalarVar("mu", lower=1.0))
    for k in keys:
        if k != base:
            problem.scalar_vars.append(ScalarVar(_tname((gamma,) + k), lower=0.0))
    con = SymExpr(
        P[gamma].shape[0], constant=N[base] - P[gamma], label=f"{gamma}|simplex"
    )
    con.add_scalar("mu", Q)
    for k in keys:
        if k != base:
            con.add_scalar(_tname((gamma,) + k), N[k] - N[base])
    problem.psd_constraints.append(con)
    # base coefficient 1 - sum of the others must stay nonnegative
    box = SymExpr(1, constant=np.array([[1.0]]), label=f"{gamma}|simplex-sum")
    for k in keys:
        if k != base:
            box.add_scalar(_tname((gamma,) + k), np.array([[-1.0]]))
    problem.psd_constraints.append(box)
    problem.objective = Objective("min", scalar_coeffs={"mu": 1.0})
    sol = solve(problem, options)
    if sol.status != "optimal":
        raise TightnessError(
            f"group relaxation ({gamma}) returned {sol.status}: {sol.message}"
        )
    coeffs = {}
    rest = 0.0
    for k in keys:
        if k == base:
            continue
        val = sol.values[_tname((gamma,) + k)]
        if val > 1e-12:
            coeffs[k] = val
            rest += val
    coeffs[base] = coeffs.get(base, 0.0) + max(0.0, 1.0 - rest)
    return sol.values["mu"], coeffs


def _solve_min_block(gamma, alpha, i, omega, P, N, Q, S, num_modes, options):
    tm, sm = _min_block_terms(gamma, alpha, i, omega, S, num_modes)
    idx = (gamma, alpha, i, omega)
    problem = SdpProblem()
    problem.scalar_vars.append(ScalarVar("mu", lower=1.0))
    for j in tm:
        problem.scalar_vars.append(ScalarVar(_tname(idx + (j,)), lower=0.0))
    for zeta in sm:
        problem.scalar_vars.append(ScalarVar(_sname(idx + (zeta,)), lower=0.0))
    con = SymExpr(
        P[gamma].shape[0],
        constant=N[(alpha, i)] - P[gamma],
        label=f"{gamma}|{alpha}|{i}|{','.join(omega)}",
    )
    con.add_scalar("mu", Q)
    for j in tm:
        con.add_scalar(_tname(idx + (j,)), N[(omega[j - 1], j)] - N[(alpha, i)])
    for zeta in sm:
        con.add_scalar(_sname(idx + (zeta,)), P[gamma] - P[zeta])
    problem.psd_constraints.append(con)
    problem.objective = Objective("min", scalar_coeffs={"mu": 1.0})
    sol = solve(problem, options)
    if sol.status != "optimal":
        raise TightnessError(f"block {idx} returned {sol.status}: {sol.message}")
    fam = {}
    for j in tm:
        val = sol.values[_tname(idx + (j,))]
        if val > 1e-12:
            fam[("t",) + idx + (j,)] = val
    for zeta in sm:
        val = sol.values[_sname(idx + (zeta,))]
        if val > 1e-12:
            fam[("s",) + idx + (zeta,)] = val
    return sol.values["mu"], fam


def tightness_max(
    cert: Certificate,
    sys: SwitchedSystem,
    cost: QuadCost,
    mode: str = "auto",
    options: SolveOptions | None = None,
    feas_tol: float = 1e-7,
) -> TightnessResult:
    """Smallest mu with V/mu a certified lower bound, for max-combined V.

    One matrix constraint per (gamma, alpha, i) in S x S x modes, each with its
    own multiplier family over (beta, j). mode "monolithic" solves one SDP,
    "decomposed" solves per-block minima and takes the maximum (identical value
    by the interval argument in the module docstring); "auto" picks by size and
    falls back to decomposed if the monolithic solve fails numerically.
    """
    _check_case(cert, "max")
    options = options or SolveOptions()
    S, P, N, G = _fixed_data(cert, sys, cost)
    M = sys.num_modes
    blocks = [(g, a, i) for g in S for a in S for i in range(1, M + 1)]
    per_block = len(S) * M - 1
    total_mults = len(blocks) * per_block
    auto = mode == "auto"
    if auto:
        mode = "monolithic" if total_mults <= MONOLITHIC_MULTIPLIER_CAP else "decomposed"

    if mode == "monolithic":
        problem = SdpProblem()
        problem.scalar_vars.append(ScalarVar("mu", lower=1.0))
        for g, a, i in blocks:
            for beta, j in _max_block_terms(g, a, i, S, N, M):
                problem.scalar_vars.append(
                    ScalarVar(_tname((g, a, i, beta, j)), lower=0.0)
                )
            problem.psd_constraints.append(
                _constraint_max(g, a, i, P, N, cost.Q, _max_block_terms(g, a, i, S, N, M))
            )
        problem.objective = Objective("min", scalar_coeffs={"mu": 1.0})
        sol = solve(problem, options)
        if sol.status == "capacity":
            raise TightnessCapacityError(sol.message)
        if sol.status != "optimal" and auto:
            # the one big SDP is occasionally ill-conditioned where the small
            # per-block programs are not; fall through to the decomposed path
            warnings.warn(
                f"monolithic solve returned {sol.status}; retrying decomposed"
            )
            mode = "decomposed"
        elif sol.status != "optimal":
            raise TightnessError(f"monolithic solve returned {sol.status}: {sol.message}")
        else:
            mu = max(1.0, sol.values["mu"])
            multipliers = {}
            for g, a, i in blocks:
                for beta, j in _max_block_terms(g, a, i, S, N, M):
                    val = sol.values[_tname((g, a, i, beta, j))]
                    if val > 1e-12:
                        multipliers[(g, a, i, beta, j)] = val
            solved = len(blocks)
    if mode == "decomposed":
        ub = {g: max(1.0, min(G[g].values())) for g in S}
        order = sorted(S, key=lambda g: -ub[g])
        mu = 1.0
        multipliers = {}
        solved = 0
        relaxed = {}  # group certified whole by its simplex solution
        pruned = []  # group certified by one transfer multiplier
        for pos, g in enumerate(order):
            if ub[g] <= mu:
                pruned = order[pos:]
                break
            try:
                relax_mu, coeffs = _solve_max_group_relaxation(
                    g, P, N, cost.Q, G[g], options
                )
                solved += 1
            except TightnessError:
                relax_mu, coeffs = float("inf"), None
            if relax_mu <= mu and coeffs is not None:
                relaxed[g] = coeffs
                continue
            for a in S:
                for i in range(1, M + 1):
                    block_mu, t = _solve_max_block(g, a, i, P, N, cost.Q, S, M, options)
                    solved += 1
                    mu = max(mu, block_mu)
                    multipliers.update(t)
        for g, coeffs in relaxed.items():
            for a in S:
                for i in range(1, M + 1):
                    for bj, val in coeffs.items():
                        if bj != (a, i):
                            multipliers[(g, a, i) + bj] = val
        for g in pruned:
            best = min(G[g], key=G[g].get)
            for a in S:
                for i in range(1, M + 1):
                    if best != (a, i):
                        multipliers[(g, a, i) + best] = 1.0
        mu = max(1.0, mu)

    residual, mu = _verify_max(mu, multipliers, blocks, S, P, N, cost.Q, M, feas_tol)
    return TightnessResult(mu, "max", multipliers, residual, mode, len(blocks), solved)


def _verify_max(mu, multipliers, blocks, S, P, N, Q, M, feas_tol):
    """Recompute every constraint eigenvalue; repair mu if numerics leak."""
    by_block = {}
    for key, t in multipliers.items():
        if t > 0.0:
            by_block.setdefault(key[:3], []).append((key[3:], t))
    worst = 0.0
    for g, a, i in blocks:
        mat = mu * Q + N[(a, i)] - P[g]
        for bj, t in by_block.get((g, a, i), ()):
            mat = mat + t * (N[bj] - N[(a, i)])
        worst = min(worst, float(np.linalg.eigvalsh(mat).min()))
    if worst < -feas_tol:
        bump = (-worst + feas_tol) / float(np.linalg.eigvalsh(Q).min())
        warnings.warn(
            f"tightness constraints violated by {-worst:.2e}; raising mu by {bump:.2e}"
        )
        return _verify_max(mu + bump, multipliers, blocks, S, P, N, Q, M, feas_tol)
    return worst, mu


def tightness_min(
    cert: Certificate,
    sys: SwitchedSystem,
    cost: QuadCost,
    mode: str = "auto",
    options: SolveOptions | None = None,
    feas_tol: float = 1e-7,
    max_blocks: int = MIN_CASE_CAP,
) -> TightnessResult:
    """Smallest mu with V/mu a certified lower bound, for min-combined V.

    Blocks are indexed by (gamma, alpha, i, omega) with omega ranging over all
    |S|^M successor selections, so the count is |S|^2 M |S|^M; assembly refuses
    above max_blocks. Decomposition and pruning mirror the max case.
    """
    _check_case(cert, "min")
    options = options or SolveOptions()
    S, P, N, G = _fixed_data(cert, sys, cost)
    M = sys.num_modes
    count = len(S) ** 2 * M * len(S) ** M
    if count > max_blocks:
        raise TightnessCapacityError(
            f"min-case index set has {count} blocks, cap is {max_blocks}"
        )
    omegas = list(product(S, repeat=M))
    blocks = [(g, a, i, om) for g in S for a in S for i in range(1, M + 1) for om in omegas]
    per_block = (M - 1) + (len(S) - 1) + 1
    auto = mode == "auto"
    if auto:
        mode = (
            "monolithic"
            if len(blocks) * per_block <= MONOLITHIC_MULTIPLIER_CAP
            else "decomposed"
        )

    if mode == "monolithic":
        problem = SdpProblem()
        problem.scalar_vars.append(ScalarVar("mu", lower=1.0))
        for g, a, i, om in blocks:
            idx = (g, a, i, om)
            tm, sm = _min_block_terms(g, a, i, om, S, M)
            for j in tm:
                problem.scalar_vars.append(ScalarVar(_tname(idx + (j,)), lower=0.0))
            for zeta in sm:
                problem.scalar_vars.append(ScalarVar(_sname(idx + (zeta,)), lower=0.0))
            con = SymExpr(
                sys.n,
                constant=N[(a, i)] - P[g],
                label=f"{g}|{a}|{i}|{','.join(om)}",
            )
            con.add_scalar("mu", cost.Q)
            for j in tm:
                con.add_scalar(_tname(idx + (j,)), N[(om[j - 1], j)] - N[(a, i)])
            for zeta in sm:
                con.add_scalar(_sname(idx + (zeta,)), P[g] - P[zeta])
            problem.psd_constraints.append(con)
        problem.objective = Objective("min", scalar_coeffs={"mu": 1.0})
        sol = solve(problem, options)
        if sol.status == "capacity":
            raise TightnessCapacityError(sol.message)
        if sol.status != "optimal" and auto:
            warnings.warn(
                f"monolithic solve returned {sol.status}; retrying decomposed"
            )
            mode = "decomposed"
        elif sol.status != "optimal":
            raise TightnessError(f"monolithic solve returned {sol.status}: {sol.message}")
        else:
            mu = max(1.0, sol.values["mu"])
            multipliers = {}
            for g, a, i, om in blocks:
                idx = (g, a, i, om)
                tm, sm = _min_block_terms(g, a, i, om, S, M)
                for j in tm:
                    val = sol.values[_tname(idx + (j,))]
                    if val > 1e-12:
                        multipliers[("t",) + idx + (j,)] = val
                for zeta in sm:
                    val = sol.values[_sname(idx + (zeta,))]
                    if val > 1e-12:
                        multipliers[("s",) + idx + (zeta,)] = val
            solved = len(blocks)
    if mode == "decomposed":
        # A block (g, a, i, om) only reaches targets (om_j, j) via t and any
        # zeta via s, so the group bound combines: worst omega on the t side
        # gives min_j max_beta G[g][(beta, j)], and the s-swap side gives the
        # gamma-independent max_{b,j} min_zeta G[zeta][(b, j)].
        swap_bound = max(min(G[z][bj] for z in S) for bj in N)
        ub = {
            g: max(
                1.0,
                min(
                    min(
                        max(G[g][(beta, j)] for beta in S)
                        for j in range(1, M + 1)
                    ),
                    swap_bound,
                ),
            )
            for g in S
        }
        order = sorted(S, key=lambda g: -ub[g])
        mu = 1.0
        multipliers = {}
        solved = 0
        solved_gammas = set()
        for g in order:
            if ub[g] <= mu:
                break
            for a in S:
                for i in range(1, M + 1):
                    for om in omegas:
                        block_mu, fam = _solve_min_block(
                            g, a, i, om, P, N, cost.Q, S, M, options
                        )
                        solved += 1
                        mu = max(mu, block_mu)
                        multipliers.update(fam)
            solved_gammas.add(g)
        for g in S:
            if g in solved_gammas:
                continue
            for a in S:
                for i in range(1, M + 1):
                    for om in omegas:
                        idx = (g, a, i, om)
                        # best reachable single-multiplier combination:
                        # zeta swap (or none) times t target (or none)
                        targets = [(a, i)] + [(om[j - 1], j) for j in range(1, M + 1)]
                        best_val = float("inf")
                        best_z, best_tgt = g, (a, i)
                        for z in [g] + [z for z in S if z != g]:
                            for tgt in targets:
                                if G[z][tgt] < best_val:
                                    best_val = G[z][tgt]
                                    best_z, best_tgt = z, tgt
                        if best_z != g:
                            multipliers[("s",) + idx + (best_z,)] = 1.0
                        if best_tgt != (a, i):
                            multipliers[("t",) + idx + (best_tgt[1],)] = 1.0
        mu = max(1.0, mu)

    residual, mu = _verify_min(mu, multipliers, blocks, S, P, N, cost.Q, M, feas_tol)
    return TightnessResult(mu, "min", multipliers, residual, mode, len(blocks), solved)


def _verify_min(mu, multipliers, blocks, S, P, N, Q, M, feas_tol):
    t_by_block = {}
    s_by_block = {}
    for key, val in multipliers.items():
        if val <= 0.0:
            continue
        if key[0] == "t":
            t_by_block.setdefault(key[1:5], []).append((key[5], val))
        else:
            s_by_block.setdefault(key[1:5], []).append((key[5], val))
    worst = 0.0
    for g, a, i, om in blocks:
        idx = (g, a, i, om)
        mat = mu * Q + N[(a, i)] - P[g]
        for j, t in t_by_block.get(idx, ()):
            mat = mat + t * (N[(om[j - 1], j)] - N[(a, i)])
        for zeta, s in s_by_block.get(idx, ()):
            mat = mat + s * (P[g] - P[zeta])
        worst = min(worst, float(np.linalg.eigvalsh(mat).min()))
    if worst < -feas_tol:
        bump = (-worst + feas_tol) / float(np.linalg.eigvalsh(Q).min())
        warnings.warn(
            f"tightness constraints violated by {-worst:.2e}; raising mu by {bump:.2e}"
        )
        return _verify_min(mu + bump, multipliers, blocks, S, P, N, Q, M, feas_tol)
    return worst, mu


def compute_tightness(cert: Certificate, sys: SwitchedSystem, cost: QuadCost, **kw):
    """Dispatch on the certificate's combiner."""
    if cert.combiner == "max":
        return tightness_max(cert, sys, cost, **kw)
    return tightness_min(cert, sys, cost, **kw)


def sandwich_check(
    cert: Certificate,
    result: TightnessResult,
    sys: SwitchedSystem,
    cost: QuadCost,
    samples: int = 50,
    seed: int = 0,
    H_max: int = 40,
    tail_tol: float = 1e-6,
) -> SandwichReport:
    """Oracle confirmation of V/mu <= J <= V at sampled unit states.

    Samples whose truncated oracle value has not stabilized by H_max are
    counted inconclusive, never failed. The certificate is used to sharpen
    oracle pruning, which is sound because V dominates the true cost.
    """
    from .oracle import OracleCapacityError, value_oracle

    rng = np.random.default_rng(seed)
    worst_low = float("inf")
    worst_up = float("inf")
    inconclusive = 0
    checked = 0
    for _ in range(samples):
        x = rng.standard_normal(sys.n)
        x /= np.linalg.norm(x)
        try:
            res = value_oracle(
                sys, cost, x, H=None, tail_tol=tail_tol, certificate=cert
            )
        except OracleCapacityError:
            inconclusive += 1
            continue
        if not res.stabilized:
            inconclusive += 1
            continue
        checked += 1
        v = cert.evaluate(x)
        tol = tail_tol * (1.0 + res.value)
        worst_low = min(worst_low, res.value + tol - v / result.mu)
        worst_up = min(worst_up, v + tol - res.value)
    return SandwichReport(
        ok=worst_low >= 0.0 and worst_up >= 0.0 and checked > 0,
        checked=checked,
        inconclusive=inconclusive,
        worst_lower_margin=worst_low,
        worst_upper_margin=worst_up,
    )
