"""
Distributed Matrix Multiplication on the Congested Clique

Two product routines over row-distributed matrices (row v lives at node v):

1. `mm_semiring` - the 3D algorithm for any semiring. Nodes are cubes of the
   index space; O(n^(1/3)) rounds.
2. `mm_bilinear` - block-recursive fast multiplication for rings from a bilinear
   algorithm with m = n multiplications (Strassen tensor powers); O(n^(1-2/ω)).

Both are LangGraph workflows with one graph node per algorithm step.
`mm_boolean` runs Boolean products through the integer ring. `MatmulBackend` is
what the graph algorithms use to pick one of them for a given clique.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple, TypedDict

import numpy as np

from algebra import (
    BOOLEAN, MINPLUS, DimensionMismatchError, SemiringMatrix,
    SemiringMismatchError, SemiringSpec, boolean_to_integers, check_compatible,
    integers_to_boolean,
)
from network import CliqueNetwork, Message, NodeLayout, RoundStats, integer_root

logger = logging.getLogger(__name__)

try:
    from langgraph.graph import StateGraph, END
    LANGGRAPH_AVAILABLE = True
except ImportError:
    LANGGRAPH_AVAILABLE = False
    logger.warning("LangGraph not available. Install with: pip install langgraph")


# ==================== ERRORS ====================

class NodeCountError(ValueError):
    """The clique size does not fit the algorithm's radix structure"""

    def __init__(self, n: int, kind: str, nearest: Tuple[Optional[int], int]):
        below, above = nearest
        hint = f"{above}" if below is None else f"{below} or {above}"
        super().__init__(f"{kind} multiplication cannot run on n={n} nodes; nearest valid: {hint}")
        self.n = n
        self.kind = kind
        self.nearest = nearest


class BilinearAlgorithmError(ValueError):
    """Coefficient tensors that do not multiply matrices"""


def require_langgraph():
    if not LANGGRAPH_AVAILABLE:
        raise ImportError("LangGraph is required for the clique workflows. Install with: pip install langgraph")


# ==================== NODE COUNTS ====================

def power_exponent(n: int, base: int) -> Optional[int]:
    """L with base**L == n, or None."""
    if n < 1:
        return None
    level, value = 0, 1
    while value < n:
        value *= base
        level += 1
    return level if value == n else None


def nearest_valid_counts(n: int, kind: str, levels: Optional[int] = None) -> Tuple[Optional[int], int]:
    """Closest node counts below and at-or-above n for `kind` ("semiring3d" / "bilinear")."""
    if kind == "semiring3d":
        q = max(1, int(round(n ** (1.0 / 3.0))))
        while q ** 3 < n:
            q += 1
        while q > 1 and (q - 1) ** 3 >= n:
            q -= 1
        above = q ** 3
        below = (q - 1) ** 3 if q > 1 and above != n else None
        return below, above
    if levels is not None:
        return None, 7 ** levels
    above = 7
    while above < n:
        above *= 7
    return (above // 7 if above > 7 and above != n else None), above


def cube_layout(n: int) -> NodeLayout:
    if integer_root(n, 3) is None:
        raise NodeCountError(n, "3D semiring", nearest_valid_counts(n, "semiring3d"))
    return NodeLayout.cube(n)


# ==================== DISTRIBUTED OPERANDS ====================

@dataclass
class RowDistribution:
    """
    A matrix padded to the clique size, row v held by node v.

    Nodes at or beyond `dim` hold padding rows of semiring zeros.
    """
    semiring: SemiringSpec
    dim: int
    rows: np.ndarray

    @classmethod
    def scatter(cls, matrix: SemiringMatrix, n_nodes: int) -> "RowDistribution":
        if matrix.n > n_nodes:
            raise DimensionMismatchError(
                f"a {matrix.n}x{matrix.n} matrix does not fit on {n_nodes} nodes"
            )
        return cls(matrix.semiring, matrix.n, matrix.padded(n_nodes))

    @classmethod
    def from_rows(cls, semiring: SemiringSpec, dim: int, rows: Dict[int, np.ndarray], n_nodes: int):
        full = semiring.zeros((n_nodes, n_nodes))
        for v, row in rows.items():
            full[v] = row
        return cls(semiring, dim, full)

    def row(self, v: int) -> np.ndarray:
        return self.rows[v]

    def gather(self) -> SemiringMatrix:
        return SemiringMatrix.wrap(self.semiring, self.rows[: self.dim, : self.dim].copy())


@dataclass
class ProductResult:
    """A distributed product, the network's stats afterwards, and min-plus witnesses if asked"""
    product: SemiringMatrix
    stats: RoundStats
    witnesses: Optional[np.ndarray] = None


# ==================== 3D SEMIRING MULTIPLICATION ====================

class SemiringState(TypedDict):
    """State for the 3D semiring product workflow"""
    # Input
    net: CliqueNetwork
    semiring: SemiringSpec
    layout: NodeLayout
    left: RowDistribution
    right: RowDistribution
    with_witness: bool

    # Step outputs
    s_blocks: Dict[int, np.ndarray]
    t_blocks: Dict[int, np.ndarray]
    partial: Dict[int, np.ndarray]
    partial_witness: Dict[int, np.ndarray]
    rows: Dict[int, np.ndarray]
    row_witness: Dict[int, np.ndarray]

    current_step: int


class SemiringMultiplier:
    """
    Node v = v1 v2 v3 (base n^(1/3)) computes S[v1**, *v2*] ⊗ T[*v2*, **v3]:

    1. v sends S[v, *u2*] to every u in v1** and T[v, **w3] to every w in *v2*
    2. local block product P^(v2)[v1**, **v3]
    3. v sends P^(v2)[u, **v3] to every u in v1**
    4. u folds the n^(1/3) partial rows with ⊕
    """

    def __init__(self):
        require_langgraph()
        self.workflow = self._build_workflow()

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(SemiringState)

        workflow.add_node("step1_distribute", self._step1_distribute)
        workflow.add_node("step2_multiply", self._step2_multiply)
        workflow.add_node("step3_return", self._step3_return)
        workflow.add_node("step4_fold", self._step4_fold)

        workflow.set_entry_point("step1_distribute")
        workflow.add_edge("step1_distribute", "step2_multiply")
        workflow.add_edge("step2_multiply", "step3_return")
        workflow.add_edge("step3_return", "step4_fold")
        workflow.add_edge("step4_fold", END)

        return workflow.compile()

    @staticmethod
    def _groups(layout: NodeLayout) -> Tuple[Tuple[np.ndarray, ...], List[List[np.ndarray]]]:
        digits = layout.digit_table()
        q = layout.radices[0]
        groups = [[np.flatnonzero(digits[axis] == x) for x in range(q)] for axis in range(3)]
        return digits, groups

    def _step1_distribute(self, state: SemiringState) -> SemiringState:
        net, sr = state["net"], state["semiring"]
        (d1, d2, d3), groups = self._groups(state["layout"])
        wpe = sr.words_per_element
        messages = []
        for v in range(net.n):
            s_row = state["left"].row(v)
            t_row = state["right"].row(v)
            for u in groups[0][d1[v]]:
                cols = groups[1][d2[u]]
                messages.append(Message(v, int(u), s_row[cols], len(cols) * wpe, ("S", v, int(d2[u]))))
            for w in groups[1][d2[v]]:
                cols = groups[2][d3[w]]
                messages.append(Message(v, int(w), t_row[cols], len(cols) * wpe, ("T", v, int(d3[w]))))

        with net.phase("step1"):
            inbox = net.route_oblivious(messages)

        for u in range(net.n):
            received = inbox[u]
            state["s_blocks"][u] = np.stack([m.payload for m in received if m.tag[0] == "S"])
            state["t_blocks"][u] = np.stack([m.payload for m in received if m.tag[0] == "T"])
        state["current_step"] = 1
        return state

    def _step2_multiply(self, state: SemiringState) -> SemiringState:
        net, sr = state["net"], state["semiring"]
        (_, d2, _), groups = self._groups(state["layout"])
        for v in range(net.n):
            S_block, T_block = state["s_blocks"][v], state["t_blocks"][v]
            if state["with_witness"]:
                block, local = sr.matmul_with_witness(S_block, T_block)
                inner = groups[1][d2[v]]
                state["partial_witness"][v] = np.where(local >= 0, inner[np.maximum(local, 0)], -1)
            else:
                block = sr.matmul(S_block, T_block)
            state["partial"][v] = block
        state["current_step"] = 2
        return state

    def _step3_return(self, state: SemiringState) -> SemiringState:
        net, sr = state["net"], state["semiring"]
        (d1, d2, d3), groups = self._groups(state["layout"])
        wpe = sr.words_per_element + (1 if state["with_witness"] else 0)
        messages = []
        for v in range(net.n):
            block = state["partial"][v]
            for i, u in enumerate(groups[0][d1[v]]):
                payload = block[i]
                if state["with_witness"]:
                    payload = (block[i], state["partial_witness"][v][i])
                messages.append(Message(v, int(u), payload, block.shape[1] * wpe,
                                        ("P", v, int(d2[v]), int(d3[v]))))

        with net.phase("step3"):
            inbox = net.route_oblivious(messages)

        state["s_blocks"], state["t_blocks"] = {}, {}
        state["partial"] = {u: inbox[u] for u in range(net.n)}
        state["current_step"] = 3
        return state

    def _step4_fold(self, state: SemiringState) -> SemiringState:
        net, sr = state["net"], state["semiring"]
        (_, _, d3), groups = self._groups(state["layout"])
        for u in range(net.n):
            row = sr.zeros((net.n,))
            witness = np.full(net.n, -1, dtype=np.int64)
            for m in state["partial"][u]:
                cols = groups[2][d3[m.src]]
                if state["with_witness"]:
                    values, found = m.payload
                    current, held = row[cols], witness[cols]
                    better = np.less(values, current).astype(bool)
                    tie = np.equal(values, current).astype(bool) & (found >= 0) & (held >= 0) & (found < held)
                    take = better | tie
                    row[cols] = np.where(take, values, current)
                    witness[cols] = np.where(take, found, held)
                else:
                    row[cols] = sr.add(row[cols], m.payload)
            state["rows"][u] = row
            state["row_witness"][u] = witness
        state["current_step"] = 4
        return state

    def run(
        self,
        S: SemiringMatrix,
        T: SemiringMatrix,
        net: CliqueNetwork,
        with_witness: bool = False,
    ) -> ProductResult:
        layout = cube_layout(net.n)
        initial_state: SemiringState = {
            "net": net,
            "semiring": S.semiring,
            "layout": layout,
            "left": RowDistribution.scatter(S, net.n),
            "right": RowDistribution.scatter(T, net.n),
            "with_witness": with_witness,
            "s_blocks": {},
            "t_blocks": {},
            "partial": {},
            "partial_witness": {},
            "rows": {},
            "row_witness": {},
            "current_step": 0,
        }
        with net.phase("mm_semiring"):
            final_state = self.workflow.invoke(initial_state)

        out = RowDistribution.from_rows(S.semiring, S.n, final_state["rows"], net.n).gather()
        witnesses = None
        if with_witness:
            witnesses = np.stack([final_state["row_witness"][u] for u in range(net.n)])[: S.n, : S.n]
        return ProductResult(out, net.stats(), witnesses)


# ==================== BILINEAR ALGORITHMS ====================

Coefficient = Tuple[int, int, int, int]

_STRASSEN_ALPHA = {
    0: [((0, 0), 1), ((1, 1), 1)],
    1: [((1, 0), 1), ((1, 1), 1)],
    2: [((0, 0), 1)],
    3: [((1, 1), 1)],
    4: [((0, 0), 1), ((0, 1), 1)],
    5: [((1, 0), 1), ((0, 0), -1)],
    6: [((0, 1), 1), ((1, 1), -1)],
}
_STRASSEN_BETA = {
    0: [((0, 0), 1), ((1, 1), 1)],
    1: [((0, 0), 1)],
    2: [((0, 1), 1), ((1, 1), -1)],
    3: [((1, 0), 1), ((0, 0), -1)],
    4: [((1, 1), 1)],
    5: [((0, 0), 1), ((0, 1), 1)],
    6: [((1, 0), 1), ((1, 1), 1)],
}
_STRASSEN_LAMBDA = {
    (0, 0): [(0, 1), (3, 1), (4, -1), (6, 1)],
    (0, 1): [(2, 1), (4, 1)],
    (1, 0): [(1, 1), (3, 1)],
    (1, 1): [(0, 1), (1, -1), (2, 1), (5, 1)],
}


def _sparse(dense: np.ndarray) -> Tuple[Coefficient, ...]:
    return tuple(
        (int(i), int(j), int(w), int(dense[i, j, w])) for i, j, w in zip(*np.nonzero(dense))
    )


@dataclass(frozen=True)
class BilinearAlgorithm:
    """
    Multiplies d × d matrices over any ring with m multiplications:

        Ŝ^(w) = Σ α_ijw S_ij,  T̂^(w) = Σ β_ijw T_ij,  P_ij = Σ λ_ijw Ŝ^(w) T̂^(w)

    Coefficients are stored as sparse (i, j, w, value) tuples and checked against
    the matrix multiplication tensor at construction.
    """
    d: int
    m: int
    alpha: Tuple[Coefficient, ...]
    beta: Tuple[Coefficient, ...]
    lam: Tuple[Coefficient, ...]
    name: str = "bilinear"

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise BilinearAlgorithmError("d and m must be positive")
        for label, coefficients in (("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lam)):
            for i, j, w, _ in coefficients:
                if not (0 <= i < self.d and 0 <= j < self.d and 0 <= w < self.m):
                    raise BilinearAlgorithmError(f"{label} index ({i}, {j}, {w}) out of range")
        self._check_tensor()

    @classmethod
    def from_dense(cls, alpha: np.ndarray, beta: np.ndarray, lam: np.ndarray, name: str = "bilinear"):
        d, _, m = alpha.shape
        return cls(d, m, _sparse(alpha), _sparse(beta), _sparse(lam), name)

    def dense(self, which: str) -> np.ndarray:
        coefficients = {"alpha": self.alpha, "beta": self.beta, "lambda": self.lam}[which]
        out = np.zeros((self.d, self.d, self.m), dtype=np.int64)
        for i, j, w, value in coefficients:
            out[i, j, w] = value
        return out

    @property
    def omega(self) -> float:
        """log_d m; 0 for the trivial 1 × 1 algorithm"""
        return math.log(self.m) / math.log(self.d) if self.d > 1 else 0.0

    def _check_tensor(self):
        # Σ_w α_ij,w β_kl,w λ_st,w must equal [j = k][i = s][l = t]
        A, B, L = self.dense("alpha"), self.dense("beta"), self.dense("lambda")
        got = np.einsum("ijw,klw,stw->ijklst", A, B, L)
        eye = np.eye(self.d, dtype=np.int64)
        want = np.einsum("jk,is,lt->ijklst", eye, eye, eye)
        if not np.array_equal(got, want):
            raise BilinearAlgorithmError(f"{self.name} does not compute the matrix product")


@lru_cache(maxsize=None)
def strassen(levels: int = 1) -> BilinearAlgorithm:
    """The L-fold tensor power of Strassen's algorithm: d = 2^L, m = 7^L."""
    if levels < 0:
        raise BilinearAlgorithmError("levels must be non-negative")
    base = []
    for table in (_STRASSEN_ALPHA, _STRASSEN_BETA):
        t = np.zeros((2, 2, 7), dtype=np.int64)
        for w, terms in table.items():
            for (i, j), value in terms:
                t[i, j, w] = value
        base.append(t)
    lam = np.zeros((2, 2, 7), dtype=np.int64)
    for (i, j), terms in _STRASSEN_LAMBDA.items():
        for w, value in terms:
            lam[i, j, w] = value
    base.append(lam)

    powers = [np.ones((1, 1, 1), dtype=np.int64) for _ in range(3)]
    for _ in range(levels):
        for k in range(3):
            prev = powers[k]
            dp, mp = prev.shape[0], prev.shape[2]
            powers[k] = np.einsum("ijw,klv->ikjlwv", base[k], prev).reshape(2 * dp, 2 * dp, 7 * mp)
    return BilinearAlgorithm.from_dense(*powers, name=f"strassen^{levels}")


# ==================== BILINEAR MULTIPLICATION ====================

@dataclass(frozen=True)
class _BlockGeometry:
    """
    Index bookkeeping for the bilinear product on n nodes.

    Padded matrices are d × d grids of B × B blocks. Each block is cut into a
    g1 × g2 grid of sub-blocks (a × b entries); node ℓ^-1(x1, x2) = x1·g2 + x2
    owns sub-block (x1, x2) of every block.
    """
    n: int
    d: int
    g1: int
    g2: int
    B: int

    @classmethod
    def build(cls, n: int, d: int) -> "_BlockGeometry":
        g1 = max(k for k in range(1, int(math.isqrt(n)) + 1) if n % k == 0)
        g2 = n // g1
        side = -(-n // d)
        step = g1 * g2 // math.gcd(g1, g2)
        return cls(n, d, g1, g2, step * -(-side // step))

    @property
    def a(self) -> int:
        return self.B // self.g1

    @property
    def b(self) -> int:
        return self.B // self.g2

    def row_coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.arange(self.n)
        return r // self.B, (r % self.B) // self.a, (r % self.B) % self.a

    def col_coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.arange(self.n)
        return c // self.B, (c % self.B) // self.b, (c % self.B) % self.b


class BilinearState(TypedDict):
    """State for the bilinear product workflow"""
    # Input
    net: CliqueNetwork
    ring: SemiringSpec
    algorithm: BilinearAlgorithm
    geometry: _BlockGeometry
    left: RowDistribution
    right: RowDistribution

    # Step outputs
    s_hat: Dict[int, np.ndarray]
    t_hat: Dict[int, np.ndarray]
    p_hat: Dict[int, np.ndarray]
    p_local: Dict[int, np.ndarray]
    rows: Dict[int, np.ndarray]
    inbox: Dict[int, List[Message]]

    current_step: int


class BilinearMultiplier:
    """
    Seven steps, with v's secondary label ℓ(v) = x1 x2:

    1. row v goes, cut by column sub-block x2, to node (x1(v), x2)
    2. each node forms its sub-blocks of Ŝ^(w), T̂^(w) for every w
    3. the Ŝ^(w), T̂^(w) sub-blocks go to node w
    4. node w multiplies Ŝ^(w) T̂^(w) = P̂^(w)
    5. sub-block (x1, x2) of P̂^(w) goes back to node (x1, x2)
    6. each node combines P_ij = Σ λ_ijw P̂^(w) on its sub-blocks
    7. product entries are returned to the node owning their row
    """

    def __init__(self):
        require_langgraph()
        self.workflow = self._build_workflow()

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(BilinearState)

        steps = [
            ("step1_scatter_rows", self._step1_scatter_rows),
            ("step2_encode", self._step2_encode),
            ("step3_ship_factors", self._step3_ship_factors),
            ("step4_multiply", self._step4_multiply),
            ("step5_ship_products", self._step5_ship_products),
            ("step6_decode", self._step6_decode),
            ("step7_return_rows", self._step7_return_rows),
        ]
        for name, fn in steps:
            workflow.add_node(name, fn)

        workflow.set_entry_point(steps[0][0])
        for (first, _), (second, _) in zip(steps, steps[1:]):
            workflow.add_edge(first, second)
        workflow.add_edge(steps[-1][0], END)

        return workflow.compile()

    def _step1_scatter_rows(self, state: BilinearState) -> BilinearState:
        net, ring, geo = state["net"], state["ring"], state["geometry"]
        wpe = ring.words_per_element
        _, row_sub, _ = geo.row_coordinates()
        _, col_sub, _ = geo.col_coordinates()
        cols_by_sub = [np.flatnonzero(col_sub == x2) for x2 in range(geo.g2)]
        messages = []
        for v in range(net.n):
            for x2, cols in enumerate(cols_by_sub):
                target = int(row_sub[v]) * geo.g2 + x2
                messages.append(Message(v, target, state["left"].row(v)[cols], len(cols) * wpe, ("S", x2)))
                messages.append(Message(v, target, state["right"].row(v)[cols], len(cols) * wpe, ("T", x2)))

        with net.phase("step1"):
            state["inbox"] = net.route_oblivious(messages)
        state["current_step"] = 1
        return state

    def _step2_encode(self, state: BilinearState) -> BilinearState:
        net, ring, geo, alg = state["net"], state["ring"], state["geometry"], state["algorithm"]
        row_block, _, row_off = geo.row_coordinates()
        col_block, col_sub, col_off = geo.col_coordinates()
        cols_by_sub = [np.flatnonzero(col_sub == x2) for x2 in range(geo.g2)]
        shape = (geo.d, geo.d, geo.a, geo.b)
        alpha = alg.dense("alpha").reshape(geo.d * geo.d, alg.m).T
        beta = alg.dense("beta").reshape(geo.d * geo.d, alg.m).T
        for u in range(net.n):
            S_loc, T_loc = ring.zeros(shape), ring.zeros(shape)
            for m in state["inbox"][u]:
                kind, x2 = m.tag
                cols = cols_by_sub[x2]
                target = S_loc if kind == "S" else T_loc
                target[row_block[m.src], col_block[cols], row_off[m.src], col_off[cols]] = m.payload
            elem = ring.element_shape
            state["s_hat"][u] = ring.linear_combination(
                alpha, S_loc.reshape((geo.d * geo.d, -1))
            ).reshape((alg.m, geo.a, geo.b) + elem)
            state["t_hat"][u] = ring.linear_combination(
                beta, T_loc.reshape((geo.d * geo.d, -1))
            ).reshape((alg.m, geo.a, geo.b) + elem)
        state["inbox"] = {}
        state["current_step"] = 2
        return state

    def _step3_ship_factors(self, state: BilinearState) -> BilinearState:
        net, ring, geo = state["net"], state["ring"], state["geometry"]
        words = 2 * geo.a * geo.b * ring.words_per_element
        messages = [
            Message(u, w, (state["s_hat"][u][w], state["t_hat"][u][w]), words, ("hat", w))
            for u in range(net.n)
            for w in range(net.n)
        ]
        with net.phase("step3"):
            state["inbox"] = net.route_oblivious(messages)
        state["s_hat"], state["t_hat"] = {}, {}
        state["current_step"] = 3
        return state

    def _step4_multiply(self, state: BilinearState) -> BilinearState:
        net, ring, geo = state["net"], state["ring"], state["geometry"]
        for w in range(net.n):
            S_hat, T_hat = ring.zeros((geo.B, geo.B)), ring.zeros((geo.B, geo.B))
            for m in state["inbox"][w]:
                x1, x2 = divmod(m.src, geo.g2)
                rows = slice(x1 * geo.a, (x1 + 1) * geo.a)
                cols = slice(x2 * geo.b, (x2 + 1) * geo.b)
                S_hat[rows, cols], T_hat[rows, cols] = m.payload
            state["p_hat"][w] = ring.matmul(S_hat, T_hat)
        state["inbox"] = {}
        state["current_step"] = 4
        return state

    def _step5_ship_products(self, state: BilinearState) -> BilinearState:
        net, ring, geo = state["net"], state["ring"], state["geometry"]
        words = geo.a * geo.b * ring.words_per_element
        messages = []
        for w in range(net.n):
            P_hat = state["p_hat"][w]
            for u in range(net.n):
                x1, x2 = divmod(u, geo.g2)
                piece = P_hat[x1 * geo.a:(x1 + 1) * geo.a, x2 * geo.b:(x2 + 1) * geo.b]
                messages.append(Message(w, u, piece, words, ("P", w)))
        with net.phase("step5"):
            state["inbox"] = net.route_oblivious(messages)
        state["p_hat"] = {}
        state["current_step"] = 5
        return state

    def _step6_decode(self, state: BilinearState) -> BilinearState:
        net, ring, geo, alg = state["net"], state["ring"], state["geometry"], state["algorithm"]
        lam = alg.dense("lambda").reshape(geo.d * geo.d, alg.m)
        for u in range(net.n):
            stacked = np.stack([m.payload for m in state["inbox"][u]])
            combined = ring.linear_combination(lam, stacked.reshape((alg.m, -1)))
            state["p_local"][u] = combined.reshape((geo.d, geo.d, geo.a, geo.b) + ring.element_shape)
        state["inbox"] = {}
        state["current_step"] = 6
        return state

    def _step7_return_rows(self, state: BilinearState) -> BilinearState:
        net, ring, geo = state["net"], state["ring"], state["geometry"]
        wpe = ring.words_per_element
        row_block, row_sub, row_off = geo.row_coordinates()
        col_block, col_sub, col_off = geo.col_coordinates()
        cols_by_sub = [np.flatnonzero(col_sub == x2) for x2 in range(geo.g2)]
        messages = []
        for u in range(net.n):
            x1, x2 = divmod(u, geo.g2)
            cols = cols_by_sub[x2]
            P_loc = state["p_local"][u]
            for r in np.flatnonzero(row_sub == x1):
                values = P_loc[row_block[r], col_block[cols], row_off[r], col_off[cols]]
                messages.append(Message(u, int(r), values, len(cols) * wpe, ("row", x2)))

        with net.phase("step7"):
            inbox = net.route_oblivious(messages)

        for r in range(net.n):
            row = ring.zeros((net.n,))
            for m in inbox[r]:
                row[cols_by_sub[m.tag[1]]] = m.payload
            state["rows"][r] = row
        state["p_local"] = {}
        state["current_step"] = 7
        return state

    def run(
        self,
        S: SemiringMatrix,
        T: SemiringMatrix,
        net: CliqueNetwork,
        algorithm: BilinearAlgorithm,
    ) -> ProductResult:
        initial_state: BilinearState = {
            "net": net,
            "ring": S.semiring,
            "algorithm": algorithm,
            "geometry": _BlockGeometry.build(net.n, algorithm.d),
            "left": RowDistribution.scatter(S, net.n),
            "right": RowDistribution.scatter(T, net.n),
            "s_hat": {},
            "t_hat": {},
            "p_hat": {},
            "p_local": {},
            "rows": {},
            "inbox": {},
            "current_step": 0,
        }
        with net.phase("mm_bilinear"):
            final_state = self.workflow.invoke(initial_state)
        out = RowDistribution.from_rows(S.semiring, S.n, final_state["rows"], net.n).gather()
        return ProductResult(out, net.stats())


# ==================== ENTRY POINTS ====================

_semiring_multiplier: Optional[SemiringMultiplier] = None
_bilinear_multiplier: Optional[BilinearMultiplier] = None


def get_semiring_multiplier() -> SemiringMultiplier:
    global _semiring_multiplier
    if _semiring_multiplier is None:
        _semiring_multiplier = SemiringMultiplier()
    return _semiring_multiplier


def get_bilinear_multiplier() -> BilinearMultiplier:
    global _bilinear_multiplier
    if _bilinear_multiplier is None:
        _bilinear_multiplier = BilinearMultiplier()
    return _bilinear_multiplier


def mm_semiring(
    S: SemiringMatrix,
    T: SemiringMatrix,
    net: CliqueNetwork,
    with_witness: bool = False,
) -> ProductResult:
    """S ⊗ T over any semiring in O(n^(1/3)) rounds; n must be a perfect cube."""
    check_compatible(S, T)
    if with_witness and S.semiring != MINPLUS:
        raise SemiringMismatchError("witnesses are tracked for min-plus products only")
    cube_layout(net.n)
    return get_semiring_multiplier().run(S, T, net, with_witness)


def mm_bilinear(
    S: SemiringMatrix,
    T: SemiringMatrix,
    net: CliqueNetwork,
    algorithm: BilinearAlgorithm,
) -> ProductResult:
    """S · T over a ring with a bilinear algorithm whose m equals the clique size."""
    check_compatible(S, T)
    if not S.semiring.is_ring:
        raise SemiringMismatchError(f"{S.semiring.name} is not a ring; bilinear products need subtraction")
    if algorithm.m != net.n:
        levels = power_exponent(algorithm.m, 7) if algorithm.name.startswith("strassen") else None
        raise NodeCountError(net.n, algorithm.name, nearest_valid_counts(net.n, "bilinear", levels))
    if S.n > net.n:
        raise DimensionMismatchError(f"a {S.n}x{S.n} matrix does not fit on {net.n} nodes")
    return get_bilinear_multiplier().run(S, T, net, algorithm)


def mm_boolean(
    S: SemiringMatrix,
    T: SemiringMatrix,
    net: CliqueNetwork,
    algorithm: Optional[BilinearAlgorithm] = None,
) -> ProductResult:
    """Boolean product through the integers, thresholding nonzero to 1."""
    check_compatible(S, T)
    if S.semiring != BOOLEAN:
        raise SemiringMismatchError("mm_boolean takes boolean matrices")
    if algorithm is None:
        levels = power_exponent(net.n, 7)
        if levels is None:
            raise NodeCountError(net.n, "Strassen", nearest_valid_counts(net.n, "bilinear"))
        algorithm = strassen(levels)
    result = mm_bilinear(boolean_to_integers(S), boolean_to_integers(T), net, algorithm)
    return ProductResult(integers_to_boolean(result.product), result.stats)


# ==================== BACKEND SELECTION ====================

@dataclass(frozen=True)
class MatmulBackend:
    """
    Which distributed product the graph algorithms call.

    "semiring3d" runs every semiring on a cube-sized clique; "bilinear" runs rings
    (and Boolean matrices via the integers) with Strassen^levels on 7^levels nodes.
    """
    kind: str = "semiring3d"
    levels: int = 0

    def __post_init__(self):
        if self.kind not in ("semiring3d", "bilinear"):
            raise ValueError(f"unknown matmul backend {self.kind!r}")
        if self.kind == "bilinear" and self.levels < 1:
            raise ValueError("bilinear backends need at least one Strassen level")

    @classmethod
    def parse(cls, text: str) -> Optional["MatmulBackend"]:
        """'semiring3d', 'bilinear:L', or 'auto' (None: decide from the clique size)."""
        text = text.strip().lower()
        if text == "auto":
            return None
        if text == "semiring3d":
            return cls("semiring3d")
        if text.startswith("bilinear"):
            _, _, level = text.partition(":")
            return cls("bilinear", int(level) if level else 1)
        raise ValueError(f"unknown matmul backend {text!r}; use semiring3d, bilinear:L or auto")

    @classmethod
    def for_network(cls, net: CliqueNetwork) -> "MatmulBackend":
        levels = power_exponent(net.n, 7)
        if levels:
            return cls("bilinear", levels)
        if integer_root(net.n, 3) is not None:
            return cls("semiring3d")
        raise NodeCountError(net.n, "any", nearest_valid_counts(net.n, "semiring3d"))

    @property
    def label(self) -> str:
        return self.kind if self.kind == "semiring3d" else f"bilinear:{self.levels}"

    def clique_size_for(self, n: int) -> int:
        """Smallest clique this backend runs on that holds an n × n matrix."""
        if self.kind == "semiring3d":
            return nearest_valid_counts(max(n, 1), "semiring3d")[1]
        size = 7 ** self.levels
        if size < n:
            raise NodeCountError(n, f"bilinear:{self.levels}", (None, size))
        return size

    def multiply(
        self,
        S: SemiringMatrix,
        T: SemiringMatrix,
        net: CliqueNetwork,
        with_witness: bool = False,
    ) -> ProductResult:
        if self.kind == "semiring3d":
            return mm_semiring(S, T, net, with_witness=with_witness)
        if with_witness:
            raise SemiringMismatchError("the bilinear backend does not track witnesses")
        if S.semiring == BOOLEAN:
            return mm_boolean(S, T, net, strassen(self.levels))
        return mm_bilinear(S, T, net, strassen(self.levels))


def resolve_backend(backend: Optional[MatmulBackend], net: CliqueNetwork) -> MatmulBackend:
    return backend if backend is not None else MatmulBackend.for_network(net)


def clique_size_for(n: int, backend: Optional[MatmulBackend] = None) -> int:
    return (backend or MatmulBackend("semiring3d")).clique_size_for(n)

