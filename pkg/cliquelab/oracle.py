"""
Centralised Reference Oracles

Sequential ground truth for the distributed algorithms: plain matrix products,
Floyd–Warshall, BFS, exhaustive cycle enumeration and brute-force girth. Nothing
here touches the clique simulator.
"""

from collections import deque
from typing import List, Tuple, Union

import numpy as np

from algebra import INF, MINPLUS, SemiringMatrix, check_compatible, is_inf
from graph_schema import Graph, NegativeCycleError, WeightMatrix

MAX_ENUMERATION_NODES = 16
MAX_ENUMERATION_LENGTH = 8


class OracleSizeError(ValueError):
    """Input too large for exhaustive enumeration"""


def mat_mul_oracle(S: SemiringMatrix, T: SemiringMatrix) -> SemiringMatrix:
    """S ⊗ T computed in one place."""
    check_compatible(S, T)
    return SemiringMatrix.wrap(S.semiring, S.semiring.matmul(S.entries, T.entries))


def floyd_warshall(W: Union[WeightMatrix, SemiringMatrix]) -> SemiringMatrix:
    """Shortest-path distances; raises NegativeCycleError on a negative cycle."""
    weights = W.weights if isinstance(W, WeightMatrix) else W
    if weights.semiring != MINPLUS:
        raise ValueError("Floyd–Warshall takes a min-plus matrix")
    n = weights.n
    D = np.array(weights.entries, dtype=object)
    for v in range(n):
        if is_inf(D[v, v]) or D[v, v] > 0:
            D[v, v] = 0
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :]).astype(object)
    for v in range(n):
        if not is_inf(D[v, v]) and D[v, v] < 0:
            raise NegativeCycleError(v)
    return SemiringMatrix.wrap(MINPLUS, D)


def bfs_all(G: Graph) -> SemiringMatrix:
    """Hop distances between every ordered pair (∞ when unreachable)."""
    n = G.n
    out = MINPLUS.zeros((n, n))
    adjacency = [G.neighbours(v).tolist() for v in range(n)]
    for s in range(n):
        out[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adjacency[u]:
                if is_inf(out[s, w]):
                    out[s, w] = out[s, u] + 1
                    queue.append(w)
    return SemiringMatrix.wrap(MINPLUS, out)


def enumerate_kcycles(G: Graph, k: int) -> List[Tuple[int, ...]]:
    """
    Every k-cycle exactly once, as a node tuple starting at its smallest node.

    Undirected cycles are listed in one orientation; directed cycles with the same
    node set but different order are distinct.
    """
    if G.n > MAX_ENUMERATION_NODES or k > MAX_ENUMERATION_LENGTH:
        raise OracleSizeError(
            f"enumeration is limited to n <= {MAX_ENUMERATION_NODES} and "
            f"k <= {MAX_ENUMERATION_LENGTH} (got n={G.n}, k={k})"
        )
    if k < 1:
        return []
    adjacency = [set(G.neighbours(v).tolist()) for v in range(G.n)]
    if k == 1:
        return [(v,) for v in range(G.n) if v in adjacency[v]]

    cycles: List[Tuple[int, ...]] = []

    def extend(path: List[int], on_path: set):
        last = path[-1]
        if len(path) == k:
            if path[0] in adjacency[last]:
                if G.directed or path[1] < path[-1]:
                    cycles.append(tuple(path))
            return
        for nxt in sorted(adjacency[last]):
            if nxt > path[0] and nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                extend(path, on_path)
                on_path.discard(nxt)
                path.pop()

    for start in range(G.n):
        extend([start], {start})
    return cycles


def count_kcycles_brute(G: Graph, k: int) -> int:
    return len(enumerate_kcycles(G, k))


def girth_brute(G: Graph):
    """Length of a shortest cycle, ∞ if acyclic."""
    if G.has_self_loops():
        return 1
    if G.directed:
        hops = bfs_all(G).entries
        best = INF
        for u, v in G.edges():
            if not is_inf(hops[v, u]):
                best = min(best, hops[v, u] + 1)
        return best

    best = INF
    adjacency = [G.neighbours(v).tolist() for v in range(G.n)]
    for u, v in G.edges():
        # shortest u-v path avoiding the edge itself
        dist = {u: 0}
        queue = deque([u])
        while queue and v not in dist:
            x = queue.popleft()
            for y in adjacency[x]:
                if (x, y) in ((u, v), (v, u)) or y in dist:
                    continue
                dist[y] = dist[x] + 1
                queue.append(y)
        if v in dist:
            best = min(best, dist[v] + 1)
    return best
