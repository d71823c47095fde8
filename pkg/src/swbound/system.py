"""Switched linear systems, quadratic costs, trajectories, and benchmarks.

A switched system steps x_{k+1} = A_{sigma(k)} x_k, optionally with an input
term B_{sigma(k)} u_k; the stage cost is c(x) = x^T Q x (plus u^T R u in the
controlled case). Modes are 1-based labels into the matrix lists.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SwitchedSystem",
    "QuadCost",
    "Trajectory",
    "step",
    "rollout",
    "random_stable_system",
    "load_system",
    "save_system",
]

_SYM_TOL = 1e-9


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {m.shape}")
    return m


def _check_sym_pd(mat: np.ndarray, name: str) -> np.ndarray:
    """Symmetrize (with a warning above the asymmetry tolerance) and require PD."""
    asym = np.abs(mat - mat.T).max() if mat.size else 0.0
    if asym > _SYM_TOL:
        warnings.warn(f"{name} asymmetric by {asym:.2e}; symmetrizing", stacklevel=3)
    mat = 0.5 * (mat + mat.T)
    scale = np.linalg.norm(mat, 2) if mat.size else 0.0
    min_eig = float(np.linalg.eigvalsh(mat).min())
    if min_eig <= _SYM_TOL * (1.0 + scale):
        raise ValueError(
            f"{name} must be positive definite; minimum eigenvalue {min_eig:.3e}"
        )
    return mat


@dataclass(frozen=True)
class SwitchedSystem:
    """Mode matrices A (list of n x n), optional input matrices B (list of n x m)."""

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        A = tuple(_as_matrix(a, f"A[{k}]") for k, a in enumerate(self.A))
        if not A:
            raise ValueError("need at least one mode")
        n = A[0].shape[0]
        for k, a in enumerate(A):
            if a.shape != (n, n):
                raise ValueError(f"A[{k}] has shape {a.shape}, expected ({n}, {n})")
        object.__setattr__(self, "A", A)
        if self.B is not None:
            B = tuple(_as_matrix(b, f"B[{k}]") for k, b in enumerate(self.B))
            if len(B) != len(A):
                raise ValueError("B must have one matrix per mode")
            m = B[0].shape[1]
            for k, b in enumerate(B):
                if b.shape != (n, m):
                    raise ValueError(f"B[{k}] has shape {b.shape}, expected ({n}, {m})")
            object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    @property
    def m(self) -> int:
        return 0 if self.B is None else self.B[0].shape[1]

    @property
    def num_modes(self) -> int:
        return len(self.A)


@dataclass(frozen=True)
class QuadCost:
    """Stage cost x^T Q x (+ u^T R u when R is present). Q, R symmetric PD."""

    Q: np.ndarray
    R: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_sym_pd(_as_matrix(self.Q, "Q"), "Q"))
        if self.R is not None:
            object.__setattr__(self, "R", _check_sym_pd(_as_matrix(self.R, "R"), "R"))

    def stage(self, x: np.ndarray, u: np.ndarray | None = None) -> float:
        val = float(x @ self.Q @ x)
        if u is not None:
            if self.R is None:
                raise ValueError("cost has no R but an input was supplied")
            val += float(u @ self.R @ u)
        return val


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_H, modes sigma(0)..sigma(H-1), per-stage and cumulative costs."""

    states: np.ndarray  # (H+1, n)
    modes: tuple[int, ...]
    inputs: np.ndarray | None  # (H, m) or None
    stage_costs: np.ndarray  # (H,)
    cumulative_cost: float


def step(
    sys: SwitchedSystem,
    x: np.ndarray,
    mode: int,
    u: np.ndarray | None = None,
) -> np.ndarray:
    """One transition x -> A_mode x (+ B_mode u). Modes are 1-based."""
    if not 1 <= mode <= sys.num_modes:
        raise ValueError(f"mode {mode} outside 1..{sys.num_modes}")
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.n},)")
    out = sys.A[mode - 1] @ x
    if u is not None:
        if sys.B is None:
            raise ValueError("system has no input matrices")
        out = out + sys.B[mode - 1] @ np.asarray(u, dtype=float)
    return out


def rollout(
    sys: SwitchedSystem,
    cost: QuadCost,
    x0: np.ndarray,
    modes,
    inputs=None,
) -> Trajectory:
    """Simulate a fixed mode sequence (and optional input sequence) from x0."""
    modes = tuple(int(i) for i in modes)
    x = np.asarray(x0, dtype=float)
    states = [x]
    stage = []
    for k, i in enumerate(modes):
        u = None if inputs is None else np.asarray(inputs[k], dtype=float)
        stage.append(cost.stage(x, u))
        x = step(sys, x, i, u)
        states.append(x)
    inp = None if inputs is None else np.asarray(inputs, dtype=float)
    stage = np.asarray(stage)
    return Trajectory(
        states=np.asarray(states),
        modes=modes,
        inputs=inp,
        stage_costs=stage,
        cumulative_cost=float(stage.sum()),
    )


def random_stable_system(
    n: int, num_modes: int, seed: int, spectral_norm: float = 0.9
) -> SwitchedSystem:
    """Random benchmark system, stable under arbitrary switching.

    Entries are i.i.d. standard normal; all modes share one scale factor chosen
    so that max_i ||A_i||_2 equals spectral_norm exactly. A common norm bound
    below 1 certifies stability for every switching signal.
    """
    if not 0 < spectral_norm < 1:
        raise ValueError("spectral_norm must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    raw = [rng.standard_normal((n, n)) for _ in range(num_modes)]
    worst = max(np.linalg.norm(a, 2) for a in raw)
    scale = spectral_norm / worst
    return SwitchedSystem(A=tuple(a * scale for a in raw))


def save_system(sys: SwitchedSystem, cost: QuadCost, path) -> None:
    data = {
        "n": sys.n,
        "m": sys.m,
        "M": sys.num_modes,
        "A": [a.tolist() for a in sys.A],
        "Q": cost.Q.tolist(),
    }
    if sys.B is not None:
        data["B"] = [b.tolist() for b in sys.B]
    if cost.R is not None:
        data["R"] = cost.R.tolist()
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_system(path) -> tuple[SwitchedSystem, QuadCost]:
    with open(path) as fh:
        data = json.load(fh)
    A = tuple(np.asarray(a, dtype=float) for a in data["A"])
    B = None
    if data.get("B") is not None:
        B = tuple(np.asarray(b, dtype=float) for b in data["B"])
    sys = SwitchedSystem(A=A, B=B)
    R = None if data.get("R") is None else np.asarray(data["R"], dtype=float)
    cost = QuadCost(Q=np.asarray(data["Q"], dtype=float), R=R)
    if sys.n != cost.Q.shape[0]:
        raise ValueError("Q dimension does not match the system state dimension")
    if sys.B is not None and cost.R is not None and cost.R.shape[0] != sys.m:
        raise ValueError("R dimension does not match the system input dimension")
    return sys, cost
