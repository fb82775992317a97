"""
Graph and Distance Schema

This module defines the data structures exchanged between the clique algorithms
and their callers: input graphs, weighted inputs, and distance results.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from algebra import (
    BOOLEAN, INTEGERS, MINPLUS, SemiringMatrix, is_inf, parse_minplus_entry,
)
from network import RoundStats


class NegativeCycleError(ValueError):
    """A weight matrix whose closure has a negative diagonal entry"""

    def __init__(self, node: int):
        super().__init__(f"negative cycle through node {node}")
        self.node = node


# ==================== GRAPHS ====================

@dataclass(frozen=True, eq=False)
class Graph:
    """A simple graph on nodes 0..n-1; node v knows row and column v of the adjacency"""
    n: int
    adjacency: np.ndarray
    directed: bool = False
    allow_self_loops: bool = False

    def __post_init__(self):
        A = np.array(self.adjacency, dtype=bool)
        if A.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {A.shape}")
        if not self.directed and not np.array_equal(A, A.T):
            raise ValueError("undirected adjacency must be symmetric")
        if not self.allow_self_loops and A.diagonal().any():
            loop = int(np.flatnonzero(A.diagonal())[0])
            raise ValueError(f"self-loop at node {loop} (self-loops are disabled)")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Tuple[int, int]],
        directed: bool = False,
        allow_self_loops: bool = False,
    ) -> "Graph":
        A = np.zeros((n, n), dtype=bool)
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside nodes 0..{n - 1}")
            A[u, v] = True
            if not directed:
                A[v, u] = True
        return cls(n, A, directed=directed, allow_self_loops=allow_self_loops)

    @classmethod
    def from_networkx(cls, g, directed: Optional[bool] = None) -> "Graph":
        """Relabel a networkx graph's nodes in sorted order to 0..n-1."""
        order = {node: i for i, node in enumerate(sorted(g.nodes()))}
        is_directed = g.is_directed() if directed is None else directed
        return cls.from_edges(
            len(order),
            ((order[u], order[v]) for u, v in g.edges()),
            directed=is_directed,
            allow_self_loops=any(u == v for u, v in g.edges()),
        )

    @property
    def degrees(self) -> np.ndarray:
        """Out-degree (degree for undirected graphs)"""
        return self.adjacency.sum(axis=1).astype(np.int64)

    @property
    def mutual_degrees(self) -> np.ndarray:
        """δ(v): neighbours joined to v in both directions"""
        both = self.adjacency & self.adjacency.T
        np.fill_diagonal(both, False)
        return both.sum(axis=1).astype(np.int64)

    @property
    def edge_count(self) -> int:
        loops = int(self.adjacency.diagonal().sum())
        total = int(self.adjacency.sum())
        if self.directed:
            return total
        return (total - loops) // 2 + loops

    def neighbours(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])

    def in_neighbours(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, v])

    def edges(self) -> List[Tuple[int, int]]:
        us, vs = np.nonzero(self.adjacency)
        if self.directed:
            return [(int(u), int(v)) for u, v in zip(us, vs)]
        return [(int(u), int(v)) for u, v in zip(us, vs) if u <= v]

    def has_self_loops(self) -> bool:
        return bool(self.adjacency.diagonal().any())

    def boolean_matrix(self) -> SemiringMatrix:
        return SemiringMatrix(BOOLEAN, self.adjacency)

    def integer_matrix(self) -> SemiringMatrix:
        return SemiringMatrix.wrap(INTEGERS, self.adjacency.astype(np.int64).astype(object))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Graph":
        return cls.from_edges(
            data["n"],
            [tuple(e) for e in data.get("edges", [])],
            directed=data.get("directed", False),
            allow_self_loops=data.get("allow_self_loops", False),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "directed": self.directed,
            "allow_self_loops": self.allow_self_loops,
            "edges": [list(e) for e in self.edges()],
        }


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Integer edge weights as a min-plus matrix with a zero diagonal"""
    weights: SemiringMatrix
    directed: bool = True

    def __post_init__(self):
        if self.weights.semiring != MINPLUS:
            raise ValueError("weights must be a min-plus matrix")
        diagonal = self.weights.entries.diagonal()
        if any(d != 0 for d in diagonal):
            raise ValueError("weight matrices carry a zero diagonal")

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[Tuple[int, int, Any]],
        directed: bool = True,
    ) -> "WeightMatrix":
        W = MINPLUS.zeros((n, n))
        for v in range(n):
            W[v, v] = 0
        for u, v, w in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside nodes 0..{n - 1}")
            if u == v:
                continue
            W[u, v] = parse_minplus_entry(w)
            if not directed:
                W[v, u] = W[u, v]
        return cls(SemiringMatrix(MINPLUS, W), directed=directed)

    @classmethod
    def from_graph(cls, graph: Graph) -> "WeightMatrix":
        """Unit weights on every edge of `graph`"""
        return cls.from_edges(
            graph.n,
            ((u, v, 1) for u, v in graph.edges() if u != v),
            directed=graph.directed,
        )

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def max_weight(self) -> int:
        """M: the largest finite |weight|"""
        finite = [abs(w) for w in self.weights.entries.ravel() if not is_inf(w)]
        return max(finite, default=0)

    def has_negative_weights(self) -> bool:
        return any((not is_inf(w)) and w < 0 for w in self.weights.entries.ravel())

    def support(self) -> Graph:
        """The graph of finite off-diagonal entries"""
        A = ~MINPLUS.is_zero(self.weights.entries)
        np.fill_diagonal(A, False)
        return Graph(self.n, A, directed=True)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "directed": self.directed, "weights": self.weights.tolist()}


# ==================== DISTANCE RESULTS ====================

@dataclass
class DistanceResult:
    """Distances, next-hop routing table (-1 where none) and the last witness matrix"""
    distances: SemiringMatrix
    routes: Optional[np.ndarray] = None
    witnesses: Optional[np.ndarray] = None
    approximate: bool = False
    stats: Optional[RoundStats] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.distances.n

    def walk(self, u: int, v: int) -> List[int]:
        """Follow the routing table from u to v; raises if it does not arrive in n hops."""
        if self.routes is None:
            raise ValueError("this result carries no routing table")
        if is_inf(self.distances[u, v]):
            raise ValueError(f"{v} is unreachable from {u}")
        path = [u]
        node = u
        for _ in range(self.n):
            if node == v:
                return path
            node = int(self.routes[node, v])
            if node < 0:
                raise ValueError(f"routing table has no next hop from {path[-1]} towards {v}")
            path.append(node)
        if node == v:
            return path
        raise ValueError(f"routing walk from {u} to {v} did not arrive within {self.n} hops")

    def to_dict(self) -> Dict[str, Any]:
        result = {
            "n": self.n,
            "approximate": self.approximate,
            "distances": self.distances.tolist(),
            "routes": None if self.routes is None else self.routes.tolist(),
        }
        result.update(self.details)
        if self.stats is not None:
            result["stats"] = self.stats.to_dict()
        return result

    def to_csv(self) -> str:
        lines = ["u,v,distance,next_hop"]
        for u in range(self.n):
            for v in range(self.n):
                d = self.distances[u, v]
                hop = "" if self.routes is None or self.routes[u, v] < 0 else str(int(self.routes[u, v]))
                lines.append(f"{u},{v},{'inf' if is_inf(d) else int(d)},{hop}")
        return "\n".join(lines) + "\n"
