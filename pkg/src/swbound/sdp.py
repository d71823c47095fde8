"""Linear matrix inequality problems over symmetric variables and scalars.

Problems are affine in the decision variables: each constraint is a symmetric
matrix expression (constant plus congruence / symmetrized-product / scalar
terms) required positive semidefinite, plus optional scalar lower bounds, with
a linear objective. Solving compiles the problem to sparse conic form and
hands it to the Clarabel interior-point solver; the rest of the package
depends only on the SdpProblem/SdpSolution contract, never on the solver.

Vectorization convention (matches the solver's PSD triangle cone): the upper
triangle stacked column by column, off-diagonal entries scaled by sqrt(2), so
that svec(A) . svec(B) = <A, B>.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp

__all__ = [
    "MatrixVar",
    "ScalarVar",
    "SymExpr",
    "Objective",
    "SdpProblem",
    "SolveOptions",
    "Residuals",
    "SdpSolution",
    "VerificationReport",
    "solve",
    "verify_solution",
    "problem_to_debug_json",
]

_SQRT2 = np.sqrt(2.0)


def tri_count(d: int) -> int:
    return d * (d + 1) // 2


@lru_cache(maxsize=None)
def _tri_index(d: int):
    """(rows, cols, scale) of the column-stacked upper triangle of a d x d matrix."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows, dtype=int)
    cols = np.array(cols, dtype=int)
    scale = np.where(rows == cols, 1.0, _SQRT2)
    return rows, cols, scale


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled triangle vectorization; works on stacked (..., d, d) input."""
    d = mat.shape[-1]
    rows, cols, scale = _tri_index(d)
    return mat[..., rows, cols] * scale


def unsvec(vec: np.ndarray, d: int) -> np.ndarray:
    rows, cols, scale = _tri_index(d)
    mat = np.zeros((d, d))
    vals = np.asarray(vec) / scale
    mat[rows, cols] = vals
    mat[cols, rows] = vals
    return mat


@lru_cache(maxsize=None)
def _sym_basis(d: int) -> np.ndarray:
    """Stack of tri_count(d) symmetric basis matrices, unit vectors under svec."""
    rows, cols, _ = _tri_index(d)
    k = len(rows)
    basis = np.zeros((k, d, d))
    for t, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            basis[t, i, j] = 1.0
        else:
            basis[t, i, j] = basis[t, j, i] = 1.0 / _SQRT2
    return basis


@dataclass(frozen=True)
class MatrixVar:
    """Symmetric matrix decision variable."""

    name: str
    dim: int


@dataclass(frozen=True)
class ScalarVar:
    """Scalar decision variable with an optional lower bound."""

    name: str
    lower: float | None = None


class SymExpr:
    """Affine symmetric matrix expression: constant + sum of variable terms.

    Term kinds:
      congruence: coeff * G^T X G        (X symmetric, G shaped (p, dim))
      pair:       L X R + (L X R)^T      (X symmetric, L (dim, p), R (p, dim))
      scalar:     x * C                  (C symmetric, shaped (dim, dim))
    """

    def __init__(self, dim: int, constant=None, label: str = ""):
        self.dim = dim
        self.constant = (
            np.zeros((dim, dim)) if constant is None else np.asarray(constant, float)
        )
        if self.constant.shape != (dim, dim):
            raise ValueError("constant shape does not match expression dimension")
        self.label = label
        self.terms: list[tuple] = []

    def add_congruence(self, var: str, G: np.ndarray, coeff: float = 1.0) -> "SymExpr":
        G = np.asarray(G, float)
        if G.ndim != 2 or G.shape[1] != self.dim:
            raise ValueError(f"G must be (p, {self.dim}), got {G.shape}")
        self.terms.append(("congruence", var, G, float(coeff)))
        return self

    def add_pair(self, var: str, L: np.ndarray, R: np.ndarray) -> "SymExpr":
        L = np.asarray(L, float)
        R = np.asarray(R, float)
        if L.shape[0] != self.dim or R.shape[1] != self.dim or L.shape[1] != R.shape[0]:
            raise ValueError(f"pair shapes {L.shape}, {R.shape} do not fit dim {self.dim}")
        self.terms.append(("pair", var, L, R))
        return self

    def add_scalar(self, var: str, C: np.ndarray) -> "SymExpr":
        C = np.asarray(C, float)
        if C.shape != (self.dim, self.dim):
            raise ValueError(f"C must be ({self.dim}, {self.dim}), got {C.shape}")
        self.terms.append(("scalar", var, 0.5 * (C + C.T)))
        return self

    def variables(self) -> set[str]:
        return {t[1] for t in self.terms}

    def value(self, values: dict) -> np.ndarray:
        """Evaluate the expression at concrete variable values."""
        out = self.constant.copy()
        for term in self.terms:
            kind, var = term[0], term[1]
            v = values[var]
            if kind == "congruence":
                _, _, G, coeff = term
                out += coeff * (G.T @ v @ G)
            elif kind == "pair":
                _, _, L, R = term
                m = L @ v @ R
                out += m + m.T
            else:
                _, _, C = term
                out += float(v) * C
        return out

    def _jacobian_block(self, var_dim: int | None, kind_terms) -> np.ndarray:
        """Dense (tri(dim), var_size) Jacobian for all terms on one variable."""
        if var_dim is None:  # scalar variable
            col = np.zeros((self.dim, self.dim))
            for term in kind_terms:
                col += term[2]
            return svec(col)[:, None]
        basis = _sym_basis(var_dim)
        stack = np.zeros((basis.shape[0], self.dim, self.dim))
        for term in kind_terms:
            if term[0] == "congruence":
                _, _, G, coeff = term
                part = np.einsum("pa,kpq,qb->kab", G, basis, G)
                stack += coeff * part
            else:
                _, _, L, R = term
                part = np.einsum("ap,kpq,qb->kab", L, basis, R)
                stack += part + part.transpose(0, 2, 1)
        return svec(stack).T


@dataclass(frozen=True)
class Objective:
    """Linear objective: sum of <matrix_coeffs[v], X_v> plus scalar_coeffs terms."""

    sense: str  # "min" or "max"
    matrix_coeffs: dict = field(default_factory=dict)
    scalar_coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")


@dataclass
class SdpProblem:
    matrix_vars: list[MatrixVar] = field(default_factory=list)
    scalar_vars: list[ScalarVar] = field(default_factory=list)
    psd_constraints: list[SymExpr] = field(default_factory=list)
    objective: Objective | None = None

    def declared(self) -> set[str]:
        return {v.name for v in self.matrix_vars} | {v.name for v in self.scalar_vars}

    def check(self) -> None:
        names = [v.name for v in self.matrix_vars] + [v.name for v in self.scalar_vars]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        declared = set(names)
        for k, con in enumerate(self.psd_constraints):
            missing = con.variables() - declared
            if missing:
                raise ValueError(f"constraint {k} references undeclared {missing}")
        if self.objective is not None:
            used = set(self.objective.matrix_coeffs) | set(self.objective.scalar_coeffs)
            if used - declared:
                raise ValueError(f"objective references undeclared {used - declared}")


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-8
    max_iters: int = 200
    verbose: bool = False
    max_rows: int = 400_000
    max_vars: int = 150_000


@dataclass(frozen=True)
class Residuals:
    max_psd_violation: float
    max_scalar_violation: float
    duality_gap: float


@dataclass(frozen=True)
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | numerical_failure | capacity
    values: dict
    objective_value: float
    residuals: Residuals | None
    iterations: int = 0
    solve_time: float = 0.0
    message: str = ""


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    psd_violations: list
    scalar_violations: list
    max_psd_violation: float


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _layout(problem: SdpProblem):
    offsets = {}
    pos = 0
    for v in problem.matrix_vars:
        offsets[v.name] = (pos, v.dim)
        pos += tri_count(v.dim)
    for v in problem.scalar_vars:
        offsets[v.name] = (pos, None)
        pos += 1
    return offsets, pos


def solve(problem: SdpProblem, options: SolveOptions = SolveOptions()) -> SdpSolution:
    """Compile to sparse conic form and solve. Deterministic per (problem, options)."""
    problem.check()
    offsets, nvars = _layout(problem)

    bounded = [v for v in problem.scalar_vars if v.lower is not None]
    nrows = sum(tri_count(c.dim) for c in problem.psd_constraints) + len(bounded)
    if nrows > options.max_rows or nvars > options.max_vars:
        return SdpSolution(
            status="capacity",
            values={},
            objective_value=float("nan"),
            residuals=None,
            message=f"problem size {nrows} rows x {nvars} vars exceeds "
            f"caps ({options.max_rows}, {options.max_vars})",
        )

    rows_acc: list[np.ndarray] = []
    cols_acc: list[np.ndarray] = []
    vals_acc: list[np.ndarray] = []
    b_parts: list[np.ndarray] = []
    cones = []
    row = 0

    # scalar lower bounds first, as one nonnegative block: s = x - lb >= 0
    if bounded:
        for v in bounded:
            rows_acc.append(np.array([row]))
            cols_acc.append(np.array([offsets[v.name][0]]))
            vals_acc.append(np.array([-1.0]))
            b_parts.append(np.array([-v.lower]))
            row += 1
        cones.append(clarabel.NonnegativeConeT(len(bounded)))

    for con in problem.psd_constraints:
        k = tri_count(con.dim)
        by_var: dict[str, list] = {}
        for term in con.terms:
            by_var.setdefault(term[1], []).append(term)
        for var, terms in by_var.items():
            start, dim = offsets[var]
            block = con._jacobian_block(dim, terms)  # (k, var_size)
            r, c = np.nonzero(block)
            rows_acc.append(r + row)
            cols_acc.append(c + start)
            vals_acc.append(-block[r, c])
            del r, c
        b_parts.append(svec(con.constant))
        cones.append(clarabel.PSDTriangleConeT(con.dim))
        row += k

    A = sp.csc_matrix(
        (
            np.concatenate(vals_acc) if vals_acc else np.zeros(0),
            (
                np.concatenate(rows_acc) if rows_acc else np.zeros(0, int),
                np.concatenate(cols_acc) if cols_acc else np.zeros(0, int),
            ),
        ),
        shape=(row, nvars),
    )
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)

    q = np.zeros(nvars)
    sense = 1.0
    if problem.objective is not None:
        sense = -1.0 if problem.objective.sense == "max" else 1.0
        for name, W in problem.objective.matrix_coeffs.items():
            start, dim = offsets[name]
            q[start : start + tri_count(dim)] = sense * svec(
                0.5 * (np.asarray(W, float) + np.asarray(W, float).T)
            )
        for name, c in problem.objective.scalar_coeffs.items():
            q[offsets[name][0]] = sense * float(c)

    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    settings.max_iter = options.max_iters
    settings.tol_gap_abs = options.gap_tol
    settings.tol_gap_rel = options.gap_tol
    settings.tol_feas = min(options.feas_tol, 1e-8)
    settings.max_threads = 1

    t0 = time.perf_counter()
    raw = clarabel.DefaultSolver(sp.csc_matrix((nvars, nvars)), q, A, b, cones, settings).solve()
    wall = time.perf_counter() - t0

    status = _STATUS_MAP.get(str(raw.status), "numerical_failure")
    if status != "optimal":
        return SdpSolution(
            status=status,
            values={},
            objective_value=float("nan"),
            residuals=None,
            iterations=raw.iterations,
            solve_time=wall,
            message=str(raw.status),
        )

    x = np.asarray(raw.x)
    values: dict = {}
    for v in problem.matrix_vars:
        start, _ = offsets[v.name]
        values[v.name] = unsvec(x[start : start + tri_count(v.dim)], v.dim)
    for v in problem.scalar_vars:
        values[v.name] = float(x[offsets[v.name][0]])

    objective_value = sense * float(raw.obj_val)
    residuals = _residuals(problem, values, raw)
    if residuals.max_psd_violation > options.feas_tol or (
        residuals.max_scalar_violation > options.feas_tol
    ):
        status = "numerical_failure"
    return SdpSolution(
        status=status,
        values=values,
        objective_value=objective_value,
        residuals=residuals,
        iterations=raw.iterations,
        solve_time=wall,
        message=str(raw.status),
    )


def _residuals(problem: SdpProblem, values: dict, raw) -> Residuals:
    worst_psd = 0.0
    for con in problem.psd_constraints:
        v = con.value(values)
        worst_psd = max(worst_psd, -float(np.linalg.eigvalsh(v).min()))
    worst_scal = 0.0
    for sv in problem.scalar_vars:
        if sv.lower is not None:
            worst_scal = max(worst_scal, sv.lower - values[sv.name])
    gap = abs(float(raw.obj_val) - float(raw.obj_val_dual)) / (1.0 + abs(float(raw.obj_val)))
    return Residuals(
        max_psd_violation=worst_psd,
        max_scalar_violation=worst_scal,
        duality_gap=gap,
    )


def verify_solution(
    problem: SdpProblem, solution: SdpSolution, tol: float = 1e-7
) -> VerificationReport:
    """Independent eigenvalue check of every constraint at the solution values."""
    if not solution.values:
        return VerificationReport(False, [("<no values>", float("nan"))], [], float("nan"))
    psd_bad = []
    worst = 0.0
    for k, con in enumerate(problem.psd_constraints):
        mineig = float(np.linalg.eigvalsh(con.value(solution.values)).min())
        worst = max(worst, -mineig)
        if mineig < -tol:
            psd_bad.append((con.label or f"psd[{k}]", mineig))
    scal_bad = []
    for sv in problem.scalar_vars:
        if sv.lower is not None:
            gap = solution.values[sv.name] - sv.lower
            if gap < -tol:
                scal_bad.append((sv.name, gap))
    return VerificationReport(
        ok=not psd_bad and not scal_bad,
        psd_violations=psd_bad,
        scalar_violations=scal_bad,
        max_psd_violation=worst,
    )


def problem_to_debug_json(problem: SdpProblem) -> str:
    """Documented plain-JSON dump of a problem, for cross-solver diffing."""

    def term_dict(term):
        kind = term[0]
        if kind == "congruence":
            return {"kind": kind, "var": term[1], "G": term[2].tolist(), "coeff": term[3]}
        if kind == "pair":
            return {"kind": kind, "var": term[1], "L": term[2].tolist(), "R": term[3].tolist()}
        return {"kind": kind, "var": term[1], "C": term[2].tolist()}

    data = {
        "matrix_vars": [{"name": v.name, "dim": v.dim} for v in problem.matrix_vars],
        "scalar_vars": [
            {"name": v.name, "lower": v.lower} for v in problem.scalar_vars
        ],
        "psd_constraints": [
            {
                "label": c.label,
                "dim": c.dim,
                "constant": c.constant.tolist(),
                "terms": [term_dict(t) for t in c.terms],
            }
            for c in problem.psd_constraints
        ],
        "objective": None
        if problem.objective is None
        else {
            "sense": problem.objective.sense,
            "matrix_coeffs": {
                k: np.asarray(w).tolist()
                for k, w in problem.objective.matrix_coeffs.items()
            },
            "scalar_coeffs": dict(problem.objective.scalar_coeffs),
        },
    }
    return json.dumps(data, indent=1)
