"""Shared fixtures: the two worked planar systems and the two-node graphs."""

import numpy as np
import pytest

from swbound.graphs import LabeledGraph
from swbound.system import QuadCost, SwitchedSystem


@pytest.fixture(scope="session")
def planar_sys() -> SwitchedSystem:
    """Autonomous two-mode pair with a known tight certificate family."""
    A1 = np.array([[1.3, 0.0], [1.0, 0.3]]) / 1.75
    A2 = np.array([[-0.3, 1.0], [0.0, -1.3]]) / 1.75
    return SwitchedSystem(A=(A1, A2))


@pytest.fixture(scope="session")
def planar_cost() -> QuadCost:
    return QuadCost(Q=np.eye(2))


@pytest.fixture(scope="session")
def controlled_sys() -> SwitchedSystem:
    """Two-mode controlled pair: a rotation and a near-flip, single input."""
    A1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A2 = np.array([[-1.0, 0.0], [0.0, -0.95]])
    B = np.array([[1.0], [0.0]])
    return SwitchedSystem(A=(A1, A2), B=(B, B))


@pytest.fixture(scope="session")
def controlled_cost() -> QuadCost:
    return QuadCost(Q=np.eye(2), R=np.eye(1))


@pytest.fixture(scope="session")
def x0_pair() -> tuple[np.ndarray, np.ndarray]:
    """The two unit initial states used by the pointwise benchmarks."""
    return (
        np.array([np.cos(0.5), np.sin(0.5)]),
        np.array([np.cos(2.0), np.sin(2.0)]),
    )


@pytest.fixture(scope="session")
def two_node_graph() -> LabeledGraph:
    """Co-complete two-node graph: self-loop plus handoff per mode."""
    return LabeledGraph(
        num_modes=2,
        nodes=("1", "2"),
        edges=(("1", "1", 1), ("1", "2", 1), ("2", "2", 2), ("2", "1", 2)),
    )


@pytest.fixture(scope="session")
def broken_two_node_graph() -> LabeledGraph:
    """Same graph minus the mode-2 self-loop; no path generates '2 2'."""
    return LabeledGraph(
        num_modes=2,
        nodes=("1", "2"),
        edges=(("1", "1", 1), ("1", "2", 1), ("2", "1", 2)),
    )
