"""Agent graphs, the edge consensus map and activation schedules.

Handles:
- Connected, loop-free undirected graphs with a fixed node and edge ordering
- Graph factories and 1-indexed edge-list files
- The edge map D x = ((x_n, x_m))_{edges} with D^*D = diag(degree)
- Activation schedules selecting which agents wake at each step
"""

import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import networkx as nx
import numpy as np
from numpy.typing import NDArray

from .engine import BlockSelector
from .prox import LinearMap
from .types import ErrorCode, SolverError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Attempts made by random_connected before giving up
MAX_GRAPH_DRAWS = 1000


class GraphError(SolverError):
    """Invalid graph: disconnected, self loops or a malformed edge list."""

    def __init__(self, message: str, code: int = ErrorCode.GRAPH_INVALID):
        super().__init__(message, code)


class AgentGraph:
    """Undirected connected graph on nodes 0..N-1 without self loops.

    Edges are stored as (n, m) with n < m and sorted lexicographically; this
    ordering fixes the orientation of every edge pair (y_e(n), y_e(m)).
    """

    def __init__(self, num_nodes: int, edges: Iterable[tuple[int, int]]):
        if num_nodes < 2:
            raise GraphError(f"a consensus graph needs at least 2 nodes, got {num_nodes}")
        graph = nx.Graph()
        graph.add_nodes_from(range(num_nodes))
        for n, m in edges:
            n, m = int(n), int(m)
            if n == m:
                raise GraphError(f"self loop at node {n}")
            if not (0 <= n < num_nodes and 0 <= m < num_nodes):
                raise GraphError(f"edge ({n}, {m}) references a node outside 0..{num_nodes - 1}")
            graph.add_edge(n, m)
        if not nx.is_connected(graph):
            parts = nx.number_connected_components(graph)
            raise GraphError(f"graph is not connected ({parts} components)")

        self.graph = graph
        self.num_nodes = num_nodes
        self.edges: list[tuple[int, int]] = sorted((min(n, m), max(n, m)) for n, m in graph.edges())
        self.pairs = np.array(self.edges, dtype=np.intp).reshape(-1, 2)
        self.degrees = np.array([graph.degree(n) for n in range(num_nodes)], dtype=np.float64)

    def __repr__(self) -> str:
        return f"AgentGraph(nodes={self.num_nodes}, edges={len(self.edges)})"

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, n: int) -> list[int]:
        return sorted(self.graph.neighbors(n))

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "AgentGraph":
        """Relabel an arbitrary networkx graph onto 0..N-1 in sorted node order."""
        mapping = {node: i for i, node in enumerate(sorted(graph.nodes()))}
        return cls(len(mapping), ((mapping[a], mapping[b]) for a, b in graph.edges()))

    @classmethod
    def path(cls, num_nodes: int) -> "AgentGraph":
        return cls.from_networkx(nx.path_graph(num_nodes))

    @classmethod
    def ring(cls, num_nodes: int) -> "AgentGraph":
        if num_nodes < 3:
            raise GraphError(f"a ring needs at least 3 nodes, got {num_nodes}")
        return cls.from_networkx(nx.cycle_graph(num_nodes))

    @classmethod
    def star(cls, num_nodes: int) -> "AgentGraph":
        """Star with node 0 as the hub and num_nodes - 1 leaves."""
        return cls.from_networkx(nx.star_graph(num_nodes - 1))

    @classmethod
    def complete(cls, num_nodes: int) -> "AgentGraph":
        return cls.from_networkx(nx.complete_graph(num_nodes))

    @classmethod
    def random_connected(cls, num_nodes: int, p: float = 0.5, seed: int = 0) -> "AgentGraph":
        """Erdos-Renyi G(N, p) redrawn with successive seeds until connected."""
        for attempt in range(MAX_GRAPH_DRAWS):
            graph = nx.erdos_renyi_graph(num_nodes, p, seed=seed + attempt)
            if nx.is_connected(graph):
                logger.debug(f"Connected G({num_nodes}, {p}) after {attempt + 1} draw(s)")
                return cls.from_networkx(graph)
        raise GraphError(f"no connected G({num_nodes}, {p}) in {MAX_GRAPH_DRAWS} draws")

    @classmethod
    def from_kind(cls, kind: str, num_nodes: int, seed: int = 0) -> "AgentGraph":
        """Build a named graph: path, ring, star, complete or random."""
        factories = {
            "path": cls.path,
            "ring": cls.ring,
            "star": cls.star,
            "complete": cls.complete,
        }
        if kind == "random":
            return cls.random_connected(num_nodes, seed=seed)
        if kind not in factories:
            raise GraphError(f"unknown graph kind '{kind}'")
        return factories[kind](num_nodes)

    @classmethod
    def read_edge_list(cls, path: Path | str) -> "AgentGraph":
        """Read a 1-indexed "n m" per line edge list; '#' starts a comment.

        Node ids must be exactly 1..N.

        Raises:
            GraphError: If the file is malformed or the graph is invalid
        """
        try:
            graph = nx.read_edgelist(path, nodetype=int, data=False, comments="#")
        except (TypeError, ValueError, IndexError) as e:
            raise GraphError(f"malformed edge list {path}: {e}") from e
        nodes = sorted(graph.nodes())
        if nodes != list(range(1, len(nodes) + 1)):
            raise GraphError(f"edge list {path} must use node ids 1..N, got {nodes}")
        return cls(len(nodes), ((a - 1, b - 1) for a, b in graph.edges()))

    def write_edge_list(self, path: Path | str) -> None:
        """Write the edges 1-indexed in the stored order."""
        lines = [f"{n + 1} {m + 1}" for n, m in self.edges]
        Path(path).write_text("\n".join(lines) + "\n")


class EdgeMap(LinearMap):
    """D : X^N -> X^(2|E|), (D x)_e = (x_n, x_m) for e = (n, m).

    Points are shaped (N, dim) and (|E|, 2, dim).
    """

    def __init__(self, graph: AgentGraph, dim: int):
        self.graph = graph
        self.dim = dim
        self.in_shape = (graph.num_nodes, dim)
        self.out_shape = (graph.num_edges, 2, dim)
        self._pairs = graph.pairs

    def apply(self, x: Array) -> Array:
        return np.asarray(x, dtype=np.float64)[self._pairs]

    def adjoint(self, y: Array) -> Array:
        out = np.zeros(self.in_shape)
        np.add.at(out, self._pairs[:, 0], y[:, 0])
        np.add.at(out, self._pairs[:, 1], y[:, 1])
        return out

    @property
    def norm_bound(self) -> float:
        return math.sqrt(float(self.graph.degrees.max()))

    @property
    def gram_diagonal(self) -> Array:
        return np.broadcast_to(self.graph.degrees[:, None], self.in_shape).copy()


def build_consensus_operator(graph: AgentGraph, dim: int) -> EdgeMap:
    """Edge map of a validated graph for agent variables in R^dim."""
    return EdgeMap(graph, dim)


class ActivationSchedule(BlockSelector):
    """Distribution over sets of agents woken at each step."""

    @classmethod
    def single_agent(cls, num_nodes: int) -> "ActivationSchedule":
        return cls(num_nodes, [[n] for n in range(num_nodes)])

    @classmethod
    def all_agents(cls, num_nodes: int) -> "ActivationSchedule":
        return cls(num_nodes, [list(range(num_nodes))])

    @classmethod
    def random_edge(cls, graph: AgentGraph) -> "ActivationSchedule":
        """Wake both endpoints of a uniformly chosen edge."""
        return cls(graph.num_nodes, [list(e) for e in graph.edges])

    @classmethod
    def explicit(
        cls,
        num_nodes: int,
        subsets: Sequence[Sequence[int]],
        probabilities: Sequence[float] | None = None,
    ) -> "ActivationSchedule":
        return cls(num_nodes, subsets, probabilities)

    @classmethod
    def from_kind(cls, kind: str, graph: AgentGraph) -> "ActivationSchedule":
        """Build a named schedule: single_agent, all_agents or random_edge."""
        if kind == "single_agent":
            return cls.single_agent(graph.num_nodes)
        if kind == "all_agents":
            return cls.all_agents(graph.num_nodes)
        if kind == "random_edge":
            return cls.random_edge(graph)
        raise GraphError(f"unknown activation schedule '{kind}'")
