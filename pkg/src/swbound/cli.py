"""Command line front end.

Subcommands mirror the library layers: ``graph`` generates and checks labeled
graphs, ``bound``/``tighten``/``synth``/``oracle`` run single computations on
JSON inputs, and ``repro`` regenerates the reference experiments (Example 2,
the two tables, the three figure curves) as CSV files.

Every command that writes a file also writes ``<file>.manifest.json`` (for
``repro``: one ``<target>.manifest.json`` listing every output) recording the
exact command line, SHA-256 of each input, the seed, the solver options, the
package version and the wall time. Equal manifests (modulo wall time) imply
equal outputs: all randomness is seeded and solves are deterministic.

CSV files start with a ``# schema=swbound.<name>.v1`` comment line; column
order is fixed by the schema and rows are sorted before writing.

Exit codes: 0 success; 2 a graph failed the path-completeness gate (witness
printed); 3 the solver reported infeasibility or failed; 64 bad command line;
70 a capacity limit was exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from .bounds import (
    NotPathCompleteError,
    load_certificate,
    save_certificate,
    solve_upper_bound,
)
from .control import SynthesisError, load_controller, save_controller, synthesize
from .graphs import (
    GraphCapacityError,
    LabeledGraph,
    build_debruijn,
    is_cocomplete,
    is_complete,
    is_path_complete,
    load_graph,
    save_graph,
)
from .oracle import OracleCapacityError, closed_loop_oracle, value_oracle
from .sdp import SolveOptions
from .system import QuadCost, SwitchedSystem, load_system, random_stable_system
from .tightness import TightnessCapacityError, TightnessError, compute_tightness

EXIT_OK = 0
EXIT_NOT_PATH_COMPLETE = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
EXIT_CAPACITY = 70

SOLVER_ENV = "SWBOUND_SOLVER_OPTS"
WORKERS_ENV = "SWBOUND_WORKERS"

THETA_POINTS = 181

# Reference columns from the controlled-experiment table (order 1..5). The
# pointwise program's optima on the stated system differ from these printed
# values; `repro table2` emits both so the comparison is explicit.
TABLE2_REFERENCE = {
    ("x0a", "logdet"): [10.453, 10.426, 10.417, 10.412, 10.410],
    ("x0a", "pointwise"): [10.200, 9.475, 9.218, 9.167, 9.163],
    ("x0b", "logdet"): [10.392, 10.227, 10.142, 10.074, 10.023],
    ("x0b", "pointwise"): [9.428, 9.004, 8.841, 8.814, 8.813],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on bad flags; we reserve 2 for the
    path-completeness verdict, so remap usage errors to 64."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        # accept comma-separated negative numbers as values, e.g. --x0 -0.4,0.9
        self._negative_number_matcher = re.compile(r"^-\d[\d.,+\-eE]*$")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# small shared helpers


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"expected comma-separated floats, got {text!r}")


def _parse_orders(text: str) -> list[int]:
    # accepts "1,2,3" and "1..4"
    try:
        if ".." in text:
            lo, hi = text.split("..")
            orders = list(range(int(lo), int(hi) + 1))
        else:
            orders = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise UsageError(f"expected orders like '1,2,3' or '1..4', got {text!r}")
    if not orders or any(l < 1 for l in orders):
        raise UsageError("orders must be positive")
    return orders


def _solver_options() -> SolveOptions | None:
    raw = os.environ.get(SOLVER_ENV, "").strip()
    if not raw:
        return None
    allowed = {f.name: f.type for f in fields(SolveOptions)}
    kwargs = {}
    for item in raw.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"{SOLVER_ENV}: expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        key = key.strip()
        if key not in allowed:
            raise UsageError(f"{SOLVER_ENV}: unknown option {key!r}")
        if key == "verbose":
            kwargs[key] = val.strip().lower() in ("1", "true", "yes")
        elif key in ("max_iters", "max_rows", "max_vars"):
            kwargs[key] = int(val)
        else:
            kwargs[key] = float(val)
    return SolveOptions(**kwargs)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(manifest_path, args, inputs, outputs, t0, seed=None):
    doc = {
        "command": ["swbound"] + list(args._argv),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "solver_options": asdict(_solver_options() or SolveOptions()),
        "version": __version__,
        "wall_time_s": round(time.monotonic() - t0, 3),
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    with open(manifest_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, schema: str, header: list[str], rows: list[tuple]):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema=swbound.{schema}.v1\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.6f}"


def _pmap(fn, items):
    """Parallel map over independent solves; output order follows input order
    so downstream files stay deterministic."""
    items = list(items)
    workers = int(os.environ.get(WORKERS_ENV, "0")) or min(4, os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# built-in reference problems used by `repro`


def _example2() -> tuple[SwitchedSystem, QuadCost]:
    A1 = np.array([[1.3, 0.0], [1.0, 0.3]]) / 1.75
    A2 = np.array([[-0.3, 1.0], [0.0, -1.3]]) / 1.75
    return SwitchedSystem(A=[A1, A2]), QuadCost(Q=np.eye(2))


def _eq29() -> tuple[SwitchedSystem, QuadCost]:
    A1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A2 = np.array([[-1.0, 0.0], [0.0, -0.95]])
    B = np.array([[1.0], [0.0]])
    sys_ = SwitchedSystem(A=[A1, A2], B=[B, B])
    return sys_, QuadCost(Q=np.eye(2), R=np.eye(1))


def _fig1a_graph() -> LabeledGraph:
    # two nodes, self loops labeled by the matching mode, cross edges 1 -> 2
    # labeled 1 and 2 -> 1 labeled 2; co-complete but not complete
    return LabeledGraph(
        num_modes=2,
        nodes=["1", "2"],
        edges=[("1", "1", 1), ("1", "2", 1), ("2", "2", 2), ("2", "1", 2)],
    )


def _x0_pair() -> dict[str, np.ndarray]:
    return {
        "x0a": np.array([math.cos(0.5), math.sin(0.5)]),
        "x0b": np.array([math.cos(2.0), math.sin(2.0)]),
    }


def _theta_grid(points: int = THETA_POINTS) -> np.ndarray:
    return np.linspace(0.0, math.pi, points)


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph_gen(args) -> int:
    t0 = time.monotonic()
    g = build_debruijn(args.debruijn, args.modes, dual=args.dual)
    save_graph(g, args.output)
    _write_manifest(args.output + ".manifest.json", args, [], [args.output], t0)
    kind = "dual De Bruijn" if args.dual else "De Bruijn"
    print(
        f"{kind} order {args.debruijn}, {args.modes} modes: "
        f"{len(g.nodes)} nodes, {len(g.edges)} edges -> {args.output}"
    )
    return EXIT_OK


def cmd_graph_check(args) -> int:
    g = load_graph(args.graph)
    res = is_path_complete(g)
    print(f"complete: {'yes' if is_complete(g) else 'no'}")
    print(f"co-complete: {'yes' if is_cocomplete(g) else 'no'}")
    print(f"path-complete: {res.status}")
    if res.status == "no":
        print("witness:", " ".join(str(i) for i in res.witness))
        return EXIT_NOT_PATH_COMPLETE
    if res.status == "unknown":
        return EXIT_CAPACITY
    return EXIT_OK


_BOUND_OBJECTIVES = {
    "trace": "trace_sum",
    "logdet": "logdet_sum",
    "pointwise": "pointwise",
}


def cmd_bound(args) -> int:
    t0 = time.monotonic()
    sys_, cost = load_system(args.system)
    graph = load_graph(args.graph)
    x0 = _parse_vector(args.x0) if args.x0 else None
    if args.objective == "pointwise" and x0 is None:
        raise UsageError("--objective pointwise requires --x0")
    res = solve_upper_bound(
        sys_, cost, graph,
        objective=_BOUND_OBJECTIVES[args.objective],
        x0=x0,
        options=_solver_options(),
    )
    if res.status != "optimal":
        print(f"solve failed: status={res.status}", file=sys.stderr)
        return EXIT_CAPACITY if res.status == "capacity" else EXIT_INFEASIBLE
    print(f"combiner: {res.combiner}")
    print(f"objective value: {res.objective_value:.6f}")
    if res.bound is not None:
        print(f"bound V(x0): {res.bound:.6f}")
    if args.output:
        save_certificate(res.certificate, args.output)
        _write_manifest(
            args.output + ".manifest.json", args,
            [args.system, args.graph], [args.output], t0,
        )
        print(f"certificate -> {args.output}")
    return EXIT_OK


def cmd_tighten(args) -> int:
    t0 = time.monotonic()
    sys_, cost = load_system(args.system)
    cert = load_certificate(args.cert)
    res = compute_tightness(cert, sys_, cost, mode=args.mode, options=_solver_options())
    print(f"mu: {res.mu:.6f}")
    print(f"case: {res.case}  mode: {res.mode}  blocks: {res.num_blocks} "
          f"(solved {res.num_solved})  residual: {res.residual:.2e}")
    if args.output:
        doc = {
            "mu": res.mu,
            "case": res.case,
            "mode": res.mode,
            "num_blocks": res.num_blocks,
            "num_solved": res.num_solved,
            "residual": res.residual,
        }
        with open(args.output, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        _write_manifest(
            args.output + ".manifest.json", args,
            [args.cert, args.system], [args.output], t0,
        )
        print(f"tightness -> {args.output}")
    return EXIT_OK


_SYNTH_OBJECTIVES = {
    "surrogate": "surrogate_volume",
    "logdet": "logdet",
    "pointwise": "pointwise",
}


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    sys_, cost = load_system(args.system)
    graph = load_graph(args.graph)
    x0 = _parse_vector(args.x0) if args.x0 else None
    if args.objective == "pointwise" and x0 is None:
        raise UsageError("--objective pointwise requires --x0")
    res = synthesize(
        sys_, cost, graph,
        objective=_SYNTH_OBJECTIVES[args.objective],
        x0=x0,
        options=_solver_options(),
    )
    if res.status != "optimal":
        print(f"synthesis failed: status={res.status}", file=sys.stderr)
        return EXIT_CAPACITY if res.status == "capacity" else EXIT_INFEASIBLE
    if res.bound is not None:
        print(f"bound V(x0): {res.bound:.6f}")
    if res.objective_value is not None:
        print(f"objective value: {res.objective_value:.6f}")
    if args.output:
        save_controller(res.controller, args.output)
        _write_manifest(
            args.output + ".manifest.json", args,
            [args.system, args.graph], [args.output], t0,
        )
        print(f"controller -> {args.output}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    t0 = time.monotonic()
    sys_, cost = load_system(args.system)
    ctrl = load_controller(args.controller) if args.controller else None
    cert = load_certificate(args.cert) if args.cert else None
    if ctrl is not None and cert is None:
        cert = ctrl.cert
    inputs = [args.system]
    if args.controller:
        inputs.append(args.controller)
    if args.cert:
        inputs.append(args.cert)

    rows = []
    for text in args.x0:
        x = _parse_vector(text)
        if ctrl is not None:
            res = closed_loop_oracle(ctrl, sys_, cost, x, H=args.horizon,
                                     use_certificate=True)
        else:
            res = value_oracle(sys_, cost, x, H=args.horizon, certificate=cert)
        v = cert.evaluate(x) if cert is not None else None
        w = v / args.mu if (v is not None and args.mu) else None
        rows.append(
            tuple(f"{xi:.6f}" for xi in x)
            + (res.H, _fmt(res.value), int(res.stabilized), _fmt(v), _fmt(w))
        )
    n = sys_.n
    header = [f"x{i}" for i in range(n)] + ["H", "J_H", "stabilized", "V", "V_over_mu"]
    _write_csv(args.output, "oracle", header, rows)
    _write_manifest(args.output + ".manifest.json", args, inputs, [args.output], t0)
    print(f"{len(rows)} rows -> {args.output}")
    return EXIT_OK


# --- repro targets ---------------------------------------------------------


def _repro_example2(args, outdir) -> list[str]:
    sys_, cost = _example2()
    res = solve_upper_bound(sys_, cost, _fig1a_graph(), objective="logdet_sum",
                            options=_solver_options())
    if res.status != "optimal":
        raise TightnessError(f"reference solve failed: {res.status}")
    cert_path = os.path.join(outdir, "example2_cert.json")
    save_certificate(res.certificate, cert_path)
    rows = []
    for node in sorted(res.certificate.P):
        P = res.certificate.P[node]
        rows.append((node, _fmt(P[0, 0]), _fmt(P[0, 1]), _fmt(P[1, 0]), _fmt(P[1, 1])))
        print(f"P_{node} =\n{np.round(P, 4)}")
    csv_path = os.path.join(outdir, "example2.csv")
    _write_csv(csv_path, "example2", ["node", "p00", "p01", "p10", "p11"], rows)
    return [csv_path, cert_path]


def _repro_table1(args, outdir) -> list[str]:
    configs = [tuple(int(t) for t in c.split(",")) for c in (args.config or ["2,2", "5,3", "8,2"])]
    if any(len(c) != 2 for c in configs):
        raise UsageError("--config expects 'n,M'")
    orders = _parse_orders(args.orders or "1..4")
    reals = args.realizations

    def one(task):
        (n, M), r = task
        sys_ = random_stable_system(n, M, seed=args.seed + 7919 * r, spectral_norm=0.9)
        cost = QuadCost(Q=np.eye(n))
        out = []
        for l in orders:
            g = build_debruijn(l, M, dual=True)
            res = solve_upper_bound(sys_, cost, g, objective="trace_sum",
                                    options=_solver_options())
            if res.status != "optimal":
                raise TightnessError(f"bound failed for n={n} M={M} l={l}: {res.status}")
            tight = compute_tightness(res.certificate, sys_, cost,
                                      options=_solver_options())
            out.append((n, M, l, r, tight.mu))
        return out

    tasks = [(cfg, r) for cfg in configs for r in range(reals)]
    rows = [row for chunk in _pmap(one, tasks) for row in chunk]
    rows.sort(key=lambda t: t[:4])
    csv_path = os.path.join(outdir, "table1.csv")
    _write_csv(csv_path, "table1",
               ["n", "modes", "order", "realization", "mu"],
               [(n, M, l, r, _fmt(mu)) for n, M, l, r, mu in rows])

    means = {}
    for n, M, l, r, mu in rows:
        means.setdefault((n, M, l), []).append(mu)
    mean_rows = [
        (n, M, l, _fmt(float(np.mean(v))))
        for (n, M, l), v in sorted(means.items())
    ]
    mean_path = os.path.join(outdir, "table1_mean.csv")
    _write_csv(mean_path, "table1_mean", ["n", "modes", "order", "mean_mu"], mean_rows)
    for n, M, l, mu in mean_rows:
        print(f"n={n} M={M} order={l}: mean mu = {mu}")
    return [csv_path, mean_path]


def _repro_table2(args, outdir) -> list[str]:
    sys_, cost = _eq29()
    orders = _parse_orders(args.orders or "1..5")
    x0s = _x0_pair()
    rows = []
    for l in orders:
        g = build_debruijn(l, 2)
        for label, x0 in sorted(x0s.items()):
            res = synthesize(sys_, cost, g, objective="pointwise", x0=x0,
                             options=_solver_options())
            ref = _table2_ref(label, "pointwise", l)
            rows.append((l, label, "pointwise", _fmt(res.bound), _fmt(ref)))
        res = synthesize(sys_, cost, g, objective="logdet",
                         options=_solver_options())
        for label, x0 in sorted(x0s.items()):
            v = res.controller.cert.evaluate(x0)
            ref = _table2_ref(label, "logdet", l)
            rows.append((l, label, "logdet", _fmt(v), _fmt(ref)))
    rows.sort(key=lambda t: (t[0], t[1], t[2]))
    csv_path = os.path.join(outdir, "table2.csv")
    _write_csv(csv_path, "table2",
               ["order", "x0", "objective", "bound", "reference"], rows)
    print("order x0   objective  bound      reference")
    for l, label, obj, b, ref in rows:
        print(f"{l}     {label}  {obj:<10} {b:>10} {ref:>10}")
    print("note: pointwise bounds are the program optima for the stated system; "
          "they differ from the reference column (see README).")
    return [csv_path]


def _table2_ref(label, objective, order):
    col = TABLE2_REFERENCE.get((label, objective))
    return col[order - 1] if col and 1 <= order <= len(col) else None


def _repro_fig2(args, outdir) -> list[str]:
    sys_, cost = _example2()
    res = solve_upper_bound(sys_, cost, _fig1a_graph(), objective="logdet_sum",
                            options=_solver_options())
    if res.status != "optimal":
        raise TightnessError(f"reference solve failed: {res.status}")
    cert = res.certificate
    mu = compute_tightness(cert, sys_, cost, options=_solver_options()).mu

    def one(theta):
        x = np.array([math.cos(theta), math.sin(theta)])
        v = cert.evaluate(x)
        j = value_oracle(sys_, cost, x, certificate=cert).value
        return (_fmt(theta), _fmt(v), _fmt(v / mu), _fmt(j))

    rows = _pmap(one, _theta_grid())
    csv_path = os.path.join(outdir, "fig2.csv")
    _write_csv(csv_path, "fig2", ["theta", "V", "W", "J_H"], rows)
    print(f"mu = {mu:.6f}; {len(rows)} grid rows")
    return [csv_path]


def _repro_fig3(args, outdir) -> list[str]:
    sys_, cost = _example2()
    orders = _parse_orders(args.orders or "1,2,3")
    certs = {}
    for l in orders:
        g = build_debruijn(l, 2, dual=True)
        res = solve_upper_bound(sys_, cost, g, objective="trace_sum",
                                options=_solver_options())
        if res.status != "optimal":
            raise TightnessError(f"bound failed at order {l}: {res.status}")
        mu = compute_tightness(res.certificate, sys_, cost,
                               options=_solver_options()).mu
        certs[l] = (res.certificate, mu)
        print(f"order {l}: mu = {mu:.6f}")

    base = certs[min(orders)][0]

    def one(theta):
        x = np.array([math.cos(theta), math.sin(theta)])
        j = value_oracle(sys_, cost, x, certificate=base).value
        return [
            (l, _fmt(theta), _fmt(c.evaluate(x)), _fmt(c.evaluate(x) / mu), _fmt(j))
            for l, (c, mu) in sorted(certs.items())
        ]

    rows = [row for chunk in _pmap(one, _theta_grid()) for row in chunk]
    rows.sort(key=lambda t: (t[0], t[1]))
    csv_path = os.path.join(outdir, "fig3.csv")
    _write_csv(csv_path, "fig3", ["order", "theta", "V", "W", "J_H"], rows)
    return [csv_path]


def _repro_fig4(args, outdir) -> list[str]:
    sys_, cost = _eq29()
    orders = _parse_orders(args.orders or "1..5")
    ctrls = {}
    for l in orders:
        g = build_debruijn(l, 2)
        res = synthesize(sys_, cost, g, objective="logdet",
                         options=_solver_options())
        ctrls[l] = res.controller
        print(f"order {l}: logdet objective = {res.objective_value:.6f}")

    def one(theta):
        x = np.array([math.cos(theta), math.sin(theta)])
        out = []
        for l, ctrl in sorted(ctrls.items()):
            v = ctrl.cert.evaluate(x)
            # fixed horizon: adaptive deepening can blow the frontier cap on
            # slowly contracting closed loops, and a finite J_H suffices here
            j = closed_loop_oracle(ctrl, sys_, cost, x, H=16,
                                   use_certificate=True).value
            out.append((l, _fmt(theta), _fmt(v), "", _fmt(j)))
        return out

    rows = [row for chunk in _pmap(one, _theta_grid()) for row in chunk]
    rows.sort(key=lambda t: (t[0], t[1]))
    csv_path = os.path.join(outdir, "fig4.csv")
    _write_csv(csv_path, "fig4", ["order", "theta", "V", "W", "J_H"], rows)
    return [csv_path]


_REPRO_TARGETS = {
    "example2": _repro_example2,
    "table1": _repro_table1,
    "table2": _repro_table2,
    "fig2": _repro_fig2,
    "fig3": _repro_fig3,
    "fig4": _repro_fig4,
}


def cmd_repro(args) -> int:
    t0 = time.monotonic()
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    outputs = _REPRO_TARGETS[args.target](args, outdir)
    _write_manifest(
        os.path.join(outdir, f"{args.target}.manifest.json"),
        args, [], outputs, t0, seed=getattr(args, "seed", None),
    )
    for path in outputs:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swbound", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"swbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_graph = sub.add_parser("graph", help="generate or check labeled graphs")
    gsub = p_graph.add_subparsers(dest="graph_command", required=True,
                                  parser_class=_Parser)
    p_gen = gsub.add_parser("gen", help="generate a De Bruijn graph")
    p_gen.add_argument("--debruijn", type=int, required=True, metavar="L",
                       help="graph order")
    p_gen.add_argument("--modes", type=int, required=True, metavar="M")
    p_gen.add_argument("--dual", action="store_true",
                       help="emit the dual (edge-reversed) graph")
    p_gen.add_argument("-o", "--output", required=True)
    p_gen.set_defaults(func=cmd_graph_gen)
    p_check = gsub.add_parser("check", help="print completeness verdicts")
    p_check.add_argument("graph")
    p_check.set_defaults(func=cmd_graph_check)

    p_bound = sub.add_parser("bound", help="certificate for an autonomous system")
    p_bound.add_argument("--system", required=True)
    p_bound.add_argument("--graph", required=True)
    p_bound.add_argument("--objective", choices=sorted(_BOUND_OBJECTIVES),
                         default="trace")
    p_bound.add_argument("--x0", help="comma-separated state, e.g. '1.0,0.0'")
    p_bound.add_argument("-o", "--output", help="certificate JSON path")
    p_bound.set_defaults(func=cmd_bound)

    p_tighten = sub.add_parser("tighten", help="tightness factor mu of a certificate")
    p_tighten.add_argument("--cert", required=True)
    p_tighten.add_argument("--system", required=True)
    p_tighten.add_argument("--mode", choices=["auto", "monolithic", "decomposed"],
                           default="auto")
    p_tighten.add_argument("-o", "--output", help="tightness JSON path")
    p_tighten.set_defaults(func=cmd_tighten)

    p_synth = sub.add_parser("synth", help="controller synthesis")
    p_synth.add_argument("--system", required=True)
    p_synth.add_argument("--graph", required=True)
    p_synth.add_argument("--objective", choices=sorted(_SYNTH_OBJECTIVES),
                         default="surrogate")
    p_synth.add_argument("--x0", help="comma-separated state (pointwise only)")
    p_synth.add_argument("-o", "--output", help="controller JSON path")
    p_synth.set_defaults(func=cmd_synth)

    p_oracle = sub.add_parser("oracle", help="worst-case cost by enumeration")
    p_oracle.add_argument("--system", required=True)
    p_oracle.add_argument("--x0", action="append", required=True,
                          help="comma-separated state; repeatable")
    p_oracle.add_argument("--controller", help="closed-loop mode")
    p_oracle.add_argument("--cert", help="certificate for the V column and pruning")
    p_oracle.add_argument("--mu", type=float, help="tightness for the V/mu column")
    p_oracle.add_argument("--horizon", type=int, default=None)
    p_oracle.add_argument("-o", "--output", default="oracle.csv")
    p_oracle.set_defaults(func=cmd_oracle)

    p_repro = sub.add_parser("repro", help="regenerate reference experiments")
    p_repro.add_argument("target", choices=sorted(_REPRO_TARGETS))
    p_repro.add_argument("--outdir", default=".")
    p_repro.add_argument("--orders", help="e.g. '1,2,3' or '1..5'")
    p_repro.add_argument("--realizations", type=int, default=50)
    p_repro.add_argument("--config", action="append",
                         help="table1 'n,M' pair; repeatable")
    p_repro.add_argument("--seed", type=int, default=0)
    p_repro.set_defaults(func=cmd_repro)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"swbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotPathCompleteError as exc:
        print("graph is not path-complete", file=sys.stderr)
        print("witness:", " ".join(str(i) for i in exc.witness), file=sys.stderr)
        return EXIT_NOT_PATH_COMPLETE
    except (GraphCapacityError, OracleCapacityError, TightnessCapacityError) as exc:
        print(f"swbound: capacity limit: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (SynthesisError, TightnessError) as exc:
        print(f"swbound: solve failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"swbound: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"swbound: bad input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
