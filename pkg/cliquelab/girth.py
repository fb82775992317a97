"""
Girth on the Congested Clique

Undirected graphs split on their edge count: a graph with more than
τ = n^(1 + 1/⌊ℓ/2⌋) + n edges has a cycle of length at most ℓ, so colour-coding
tries k = 3..ℓ; a sparser graph is copied to every node and solved locally.

Directed graphs are handled with Boolean powers B^(i) (paths of length 1..i):
doubling until a diagonal 1 appears, then a binary descent through the kept
powers using B^(j+k) = (B^(j) B^(k)) ∨ A.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, FrozenSet, List, Optional, Tuple, TypedDict, Union

try:
    from langgraph.graph import StateGraph, END
    LANGGRAPH_AVAILABLE = True
except ImportError:
    LANGGRAPH_AVAILABLE = False

from algebra import INF, SemiringMatrix
from config import load_settings
from graph_schema import Graph
from matmul import MatmulBackend, require_langgraph, resolve_backend
from network import CliqueNetwork, RoundStats
from subgraph import detect_kcycle

logger = logging.getLogger(__name__)

Girth = Union[int, float]


class EdgeThresholdError(ValueError):
    """Too many edges to copy the graph to every node"""


@dataclass(frozen=True)
class GirthBound:
    """
    Cycle-length cutoff ℓ = ⌈2 + 2/ρ⌉ and the edge threshold τ(n, ℓ).

    rho=0 selects the cutoff ℓ = max(3, ⌈log₂ log₂ n⌉).
    """
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    @classmethod
    def from_settings(cls) -> "GirthBound":
        return cls(load_settings().rho)

    def cutoff(self, n: int) -> int:
        if self.rho == 0:
            if n < 4:
                return 3
            return max(3, math.ceil(math.log2(math.log2(n))))
        # 1/3 from a float must give ℓ = 8, not 9
        rho = Fraction(self.rho).limit_denominator(10 ** 6)
        return math.ceil(2 + 2 / rho)

    def threshold(self, n: int) -> float:
        return n ** (1 + 1 / (self.cutoff(n) // 2)) + n


@dataclass
class GirthResult:
    girth: Girth
    branch: str
    stats: RoundStats
    per_k: List[Dict[str, Any]] = field(default_factory=list)
    confident: bool = True
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "girth": "inf" if self.girth == INF else int(self.girth),
            "branch": self.branch,
            "confident": self.confident,
            "per_k": self.per_k,
            "stats": self.stats.to_dict(),
        }


@dataclass
class GatheredGraph:
    """The edge set every node holds after gathering"""
    n: int
    edges: FrozenSet[Tuple[int, int]]
    stats: RoundStats

    def girth(self) -> Girth:
        return local_girth(self.n, self.edges)


def local_girth(n: int, edges) -> Girth:
    """
    Shortest cycle of an undirected edge set: BFS from every root; a non-tree edge
    (u, w) closes a cycle of length at most d(u) + d(w) + 1, with equality for a
    root on a shortest cycle.
    """
    adjacency: List[List[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    best: Girth = INF
    for root in range(n):
        depth = {root: 0}
        parent = {root: -1}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            if 2 * depth[u] + 1 >= best:
                break
            for w in adjacency[u]:
                if w not in depth:
                    depth[w] = depth[u] + 1
                    parent[w] = u
                    queue.append(w)
                elif parent[u] != w:
                    best = min(best, depth[u] + depth[w] + 1)
    return best


def _owned_edges(G: Graph, v: int) -> List[int]:
    """Edges {v, w} with w > v, one word each (v·n + w)."""
    return [v * G.n + int(w) for w in G.neighbours(v) if w > v]


def count_edges(G: Graph, net: CliqueNetwork) -> int:
    """Every node announces how many edges it owns; one round."""
    owned = [len(_owned_edges(G, v)) for v in range(G.n)] + [0] * (net.n - G.n)
    with net.phase("edge_count"):
        return int(sum(net.broadcast_all(owned)))


def gather_sparse_graph(
    G: Graph,
    net: CliqueNetwork,
    bound: Optional[GirthBound] = None,
    edge_count: Optional[int] = None,
) -> GatheredGraph:
    """Copy the whole edge set to every node; the graph must be under τ(n, ℓ) edges."""
    if G.directed:
        raise ValueError("gathering is implemented for undirected graphs")
    if G.n > net.n:
        raise ValueError(f"a {G.n}-node graph does not fit on a {net.n}-node clique")
    bound = bound or GirthBound.from_settings()
    with net.phase("gather_sparse_graph"):
        m = count_edges(G, net) if edge_count is None else edge_count
        tau = bound.threshold(G.n)
        if m > tau:
            raise EdgeThresholdError(f"{m} edges exceed the gathering threshold {tau:.1f}")
        lists = [_owned_edges(G, v) for v in range(G.n)] + [[] for _ in range(net.n - G.n)]
        with net.phase("edges"):
            everyone = net.broadcast_lists(lists)
    edges = frozenset(divmod(word, G.n) for items in everyone for word in items)
    return GatheredGraph(G.n, edges, net.stats())


# ==================== UNDIRECTED GIRTH ====================

class GirthState(TypedDict):
    """State for the undirected girth workflow"""
    # Input
    net: CliqueNetwork
    graph: Graph
    bound: GirthBound
    backend: Optional[MatmulBackend]
    seed: Optional[int]
    trials: Optional[int]

    # Outputs
    edge_count: int
    threshold: float
    branch: str
    girth: Girth
    per_k: List[Dict[str, Any]]
    confident: bool


class UndirectedGirth:
    """count_edges → sparse_gather | dense_detect"""

    def __init__(self):
        require_langgraph()
        self.workflow = self._build_workflow()

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(GirthState)

        workflow.add_node("count_edges", self._count_edges)
        workflow.add_node("sparse_gather", self._sparse_gather)
        workflow.add_node("dense_detect", self._dense_detect)

        workflow.set_entry_point("count_edges")
        workflow.add_conditional_edges(
            "count_edges",
            self._choose_branch,
            {"sparse": "sparse_gather", "dense": "dense_detect"},
        )
        workflow.add_edge("sparse_gather", END)
        workflow.add_edge("dense_detect", END)

        return workflow.compile()

    def _count_edges(self, state: GirthState) -> GirthState:
        G = state["graph"]
        state["edge_count"] = count_edges(G, state["net"])
        state["threshold"] = state["bound"].threshold(G.n)
        state["branch"] = "dense" if state["edge_count"] > state["threshold"] else "sparse"
        logger.info(
            "girth: %d edges vs threshold %.1f (cutoff %d) -> %s branch",
            state["edge_count"], state["threshold"], state["bound"].cutoff(G.n), state["branch"],
        )
        return state

    def _choose_branch(self, state: GirthState) -> str:
        return state["branch"]

    def _sparse_gather(self, state: GirthState) -> GirthState:
        gathered = gather_sparse_graph(
            state["graph"], state["net"], state["bound"], edge_count=state["edge_count"]
        )
        state["girth"] = gathered.girth()
        return state

    def _dense_detect(self, state: GirthState) -> GirthState:
        G, net = state["graph"], state["net"]
        cutoff = state["bound"].cutoff(G.n)
        backend = resolve_backend(state["backend"], net)
        for k in range(3, cutoff + 1):
            result = detect_kcycle(G, k, net, seed=state["seed"], trials=state["trials"], backend=backend)
            # chance that colour-coding misses an existing k-cycle
            miss = (1 - math.exp(-k)) ** result.trials
            state["per_k"].append(
                {"k": k, "found": result.found, "trials": result.trials, "miss_probability": miss}
            )
            if result.found:
                state["girth"] = k
                return state
        logger.warning(
            "dense branch found no cycle of length <= %d; colour-coding missed with "
            "probability <= %.3g per length", cutoff, max(p["miss_probability"] for p in state["per_k"]),
        )
        state["confident"] = False
        return state

    def run(
        self,
        G: Graph,
        net: CliqueNetwork,
        bound: GirthBound,
        seed: Optional[int] = None,
        trials: Optional[int] = None,
        backend: Optional[MatmulBackend] = None,
    ) -> GirthResult:
        initial_state: GirthState = {
            "net": net,
            "graph": G,
            "bound": bound,
            "backend": backend,
            "seed": seed,
            "trials": trials,
            "edge_count": 0,
            "threshold": 0.0,
            "branch": "",
            "girth": INF,
            "per_k": [],
            "confident": True,
        }
        with net.phase("girth_undirected"):
            final_state = self.workflow.invoke(initial_state)
        return GirthResult(
            final_state["girth"],
            final_state["branch"],
            net.stats(),
            per_k=final_state["per_k"],
            confident=final_state["confident"],
            details={
                "edge_count": final_state["edge_count"],
                "threshold": final_state["threshold"],
                "cutoff": bound.cutoff(G.n),
            },
        )


_undirected_girth: Optional[UndirectedGirth] = None


def girth_undirected(
    G: Graph,
    net: CliqueNetwork,
    bound: Optional[GirthBound] = None,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    backend: Optional[MatmulBackend] = None,
) -> GirthResult:
    global _undirected_girth
    if G.directed:
        raise ValueError("girth_undirected takes an undirected graph; use girth_directed")
    if G.has_self_loops():
        raise ValueError("girth_undirected takes a simple graph")
    if G.n > net.n:
        raise ValueError(f"a {G.n}-node graph does not fit on a {net.n}-node clique")
    if _undirected_girth is None:
        _undirected_girth = UndirectedGirth()
    return _undirected_girth.run(G, net, bound or GirthBound.from_settings(), seed, trials, backend)


# ==================== DIRECTED GIRTH ====================

def girth_directed(
    G: Graph,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> GirthResult:
    """Length of a shortest directed cycle (1 for a self-loop, ∞ for a DAG)."""
    if G.n > net.n:
        raise ValueError(f"a {G.n}-node graph does not fit on a {net.n}-node clique")
    n = G.n

    def diagonal_hit(B: SemiringMatrix) -> bool:
        bits = [bool(B[v, v]) for v in range(n)] + [False] * (net.n - n)
        with net.phase("diagonal"):
            return any(net.broadcast_all(bits))

    with net.phase("girth_directed"):
        if diagonal_hit(G.boolean_matrix()):
            return GirthResult(1, "self_loop", net.stats())

        backend = resolve_backend(backend, net)
        A = G.boolean_matrix()

        def extend(left: SemiringMatrix, right: SemiringMatrix) -> SemiringMatrix:
            return backend.multiply(left, right, net).product.plus(A)

        powers: Dict[int, SemiringMatrix] = {1: A}
        i = 1
        found = False
        with net.phase("doubling"):
            while i < n:
                powers[2 * i] = extend(powers[i], powers[i])
                i *= 2
                if diagonal_hit(powers[i]):
                    found = True
                    break
        if not found:
            logger.info("no diagonal entry by B^(%d); graph is acyclic", i)
            return GirthResult(INF, "doubling", net.stats(), details={"powers": powers})

        # B^(cur) has an empty diagonal and B^(cur + 2·step) does not
        cur, B_cur = i // 2, powers[i // 2]
        step = i // 4
        with net.phase("descent"):
            while step >= 1:
                candidate = extend(B_cur, powers[step])
                if not diagonal_hit(candidate):
                    cur, B_cur = cur + step, candidate
                step //= 2
        logger.info("directed girth %d (first diagonal at B^(%d))", cur + 1, i)
    return GirthResult(cur + 1, "doubling", net.stats(), details={"powers": powers})
