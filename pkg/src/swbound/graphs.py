"""Directed labeled graphs used as certificate skeletons.

A graph G = (S, E) has edges (alpha, beta, i) labeled by modes i in {1..M}.
Completeness (every node has an outgoing edge for every label), co-completeness
(incoming, dually), and path-completeness (every finite mode word is generated
by some path) are the structural properties that make a graph usable as the
index set of a certificate. De Bruijn graphs of order l provide the standard
family: nodes are the length-l mode sequences, and reading mode i from node
(j_1..j_l) leads to (i, j_1..j_{l-1}).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import product

__all__ = [
    "LabeledGraph",
    "PathCompletenessResult",
    "GraphCapacityError",
    "build_debruijn",
    "debruijn_sequences",
    "sequence_id",
    "dualize",
    "is_complete",
    "is_cocomplete",
    "is_path_complete",
    "load_graph",
    "save_graph",
]


class GraphCapacityError(Exception):
    """Raised when a graph construction or check exceeds its configured size cap."""


@dataclass(frozen=True)
class LabeledGraph:
    """Immutable directed graph with mode-labeled edges.

    nodes is an ordered tuple of opaque string identifiers; edges are triples
    (source, target, label) with labels in 1..num_modes. Duplicate edge triples
    are removed on construction with a warning (they are idempotent downstream).
    """

    num_modes: int
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, int], ...]

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValueError(f"num_modes must be >= 1, got {self.num_modes}")
        if not self.nodes:
            raise ValueError("graph must have at least one node")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node identifiers")
        node_set = set(self.nodes)
        seen = set()
        deduped = []
        for e in self.edges:
            src, dst, lab = e
            if src not in node_set or dst not in node_set:
                raise ValueError(f"edge {e} references unknown node")
            if not (1 <= lab <= self.num_modes):
                raise ValueError(f"edge {e} has label outside 1..{self.num_modes}")
            if e in seen:
                continue
            seen.add(e)
            deduped.append(e)
        if len(deduped) != len(self.edges):
            warnings.warn(
                f"removed {len(self.edges) - len(deduped)} duplicate edge(s)",
                stacklevel=2,
            )
            object.__setattr__(self, "edges", tuple(deduped))

    @property
    def node_index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.nodes)}


@dataclass(frozen=True)
class PathCompletenessResult:
    """Outcome of the path-completeness decision.

    status is "yes", "no", or "unknown" (state cap hit before the empty set was
    reached). witness is the shortest mode word no path generates, present only
    when status is "no".
    """

    status: str
    witness: tuple[int, ...] | None = None

    def __bool__(self):
        return self.status == "yes"


def debruijn_sequences(order: int, num_modes: int) -> list[tuple[int, ...]]:
    """All mode sequences of the given length, in lexicographic order.

    This is the node ordering used by build_debruijn; order 0 yields the single
    empty sequence.
    """
    return list(product(range(1, num_modes + 1), repeat=order))


def sequence_id(seq: tuple[int, ...], num_modes: int) -> str:
    if not seq:
        return "e"
    sep = "" if num_modes <= 9 else ","
    return sep.join(str(i) for i in seq)


def build_debruijn(
    order: int,
    num_modes: int,
    dual: bool = False,
    max_edges: int = 2_000_000,
) -> LabeledGraph:
    """De Bruijn graph of the given order over modes 1..num_modes.

    Nodes are all length-order mode sequences; the edge (alpha, beta, i) is
    present iff alpha = (j_1..j_l) and beta = (i, j_1..j_{l-1}). Order 0 gives
    a single node carrying M self-loops. With dual=True every edge direction is
    reversed after construction: the primal graph is complete, the dual is
    co-complete.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if num_modes < 1:
        raise ValueError("num_modes must be >= 1")
    n_edges = num_modes ** (order + 1)
    if n_edges > max_edges:
        raise GraphCapacityError(
            f"De Bruijn graph would have {n_edges} edges (cap {max_edges})"
        )
    seqs = debruijn_sequences(order, num_modes)
    ids = {s: sequence_id(s, num_modes) for s in seqs}
    edges = []
    for alpha in seqs:
        for i in range(1, num_modes + 1):
            beta = (i,) + alpha[:-1] if order > 0 else ()
            if dual:
                edges.append((ids[beta], ids[alpha], i))
            else:
                edges.append((ids[alpha], ids[beta], i))
    return LabeledGraph(
        num_modes=num_modes,
        nodes=tuple(ids[s] for s in seqs),
        edges=tuple(edges),
    )


def dualize(g: LabeledGraph) -> LabeledGraph:
    """Reverse every edge; nodes and labels unchanged. An involution."""
    return LabeledGraph(
        num_modes=g.num_modes,
        nodes=g.nodes,
        edges=tuple((dst, src, lab) for (src, dst, lab) in g.edges),
    )


def is_complete(g: LabeledGraph) -> bool:
    """True iff every (node, label) pair has at least one outgoing edge."""
    out = {(src, lab) for (src, dst, lab) in g.edges}
    return all(
        (v, i) in out for v in g.nodes for i in range(1, g.num_modes + 1)
    )


def is_cocomplete(g: LabeledGraph) -> bool:
    """True iff every (node, label) pair has at least one incoming edge."""
    inc = {(dst, lab) for (src, dst, lab) in g.edges}
    return all(
        (v, i) in inc for v in g.nodes for i in range(1, g.num_modes + 1)
    )


def is_path_complete(
    g: LabeledGraph, max_states: int = 1_000_000
) -> PathCompletenessResult:
    """Decide whether every finite mode word is generated by some path.

    Subset construction: starting from the set of all nodes, reading label i
    maps a node set S to {beta : exists alpha in S with (alpha, beta, i) in E}.
    The graph is path-complete iff the empty set is unreachable. Breadth-first
    search returns the shortest witness word (lexicographically smallest among
    shortest, since labels are tried in increasing order). The subset automaton
    has at most 2^|nodes| states, so reaching the cap without finding the empty
    set is conclusive only when the cap exceeds that; otherwise the result is
    "unknown", never a silent yes.
    """
    index = g.node_index
    n = len(g.nodes)
    # successors[label][node] = bitmask of targets
    succ = [[0] * n for _ in range(g.num_modes + 1)]
    for src, dst, lab in g.edges:
        succ[lab][index[src]] |= 1 << index[dst]

    start = (1 << n) - 1
    seen = {start}
    frontier = [(start, ())]
    while frontier:
        next_frontier = []
        for state, word in frontier:
            for lab in range(1, g.num_modes + 1):
                t = 0
                rem = state
                while rem:
                    low = rem & -rem
                    t |= succ[lab][low.bit_length() - 1]
                    rem ^= low
                if t == 0:
                    return PathCompletenessResult("no", word + (lab,))
                if t not in seen:
                    if len(seen) >= max_states:
                        return PathCompletenessResult("unknown")
                    seen.add(t)
                    next_frontier.append((t, word + (lab,)))
        frontier = next_frontier
    return PathCompletenessResult("yes")


def save_graph(g: LabeledGraph, path) -> None:
    data = {
        "num_modes": g.num_modes,
        "nodes": list(g.nodes),
        "edges": [[src, dst, lab] for (src, dst, lab) in g.edges],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_graph(path) -> LabeledGraph:
    with open(path) as fh:
        data = json.load(fh)
    return LabeledGraph(
        num_modes=int(data["num_modes"]),
        nodes=tuple(str(v) for v in data["nodes"]),
        edges=tuple((str(s), str(d), int(l)) for s, d, l in data["edges"]),
    )
