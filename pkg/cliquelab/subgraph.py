"""
Subgraph Counting and Detection

Triangles and 4-cycles are counted from traces of adjacency powers; k-cycles are
detected by colour-coding with Boolean products; 4-cycles are detected in a
constant number of rounds by spreading 2-walks over a tile packing of the clique.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple, TypedDict

import numpy as np

try:
    from langgraph.graph import StateGraph, END
    LANGGRAPH_AVAILABLE = True
except ImportError:
    LANGGRAPH_AVAILABLE = False

from algebra import BOOLEAN, INTEGERS, SemiringMatrix, trace
from graph_schema import Graph
from matmul import MatmulBackend, require_langgraph, resolve_backend
from network import CliqueNetwork, Message, RoundStats

logger = logging.getLogger(__name__)


class TilePackingError(ValueError):
    """Tiles do not fit in the k × k square"""


@dataclass
class CountResult:
    count: int
    stats: RoundStats


@dataclass
class DetectionResult:
    found: bool
    stats: RoundStats
    trials: int = 1
    details: Dict[str, Any] = field(default_factory=dict)


def _check_fits(G: Graph, net: CliqueNetwork):
    if G.n > net.n:
        raise ValueError(f"a {G.n}-node graph does not fit on a {net.n}-node clique")


def _padded(values: Iterable[Any], n: int, fill: Any = 0) -> List[Any]:
    values = list(values)
    return values + [fill] * (n - len(values))


def _broadcast_trace(values: List[int], net: CliqueNetwork) -> int:
    """Each node announces its diagonal entry; everyone then takes the trace of diag(values)."""
    with net.phase("trace"):
        diagonal = np.array(net.broadcast_all(_padded(values, net.n)), dtype=object)
    return int(trace(SemiringMatrix.wrap(INTEGERS, np.diag(diagonal))))


# ==================== TRACE COUNTING ====================

def count_triangles(
    G: Graph,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> CountResult:
    """trace(A³)/6 (undirected) or /3 (directed), from one distributed square."""
    _check_fits(G, net)
    # auto picks mm_bilinear on 7^L cliques and the 3D product on cubes
    backend = resolve_backend(backend, net)
    with net.phase("count_triangles"):
        A = G.integer_matrix()
        A2 = backend.multiply(A, A, net).product.entries
        # (A³)_vv = Σ_w (A²)_vw A_wv, and column v of A is v's in-neighbourhood
        closed = [int(sum(A2[v, w] for w in G.in_neighbours(v))) for v in range(G.n)]
        total = _broadcast_trace(closed, net)
    return CountResult(total // (3 if G.directed else 6), net.stats())


def count_4cycles(
    G: Graph,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> CountResult:
    """
    (trace(A⁴) − Σ_v (2 deg(v)² − deg(v))) / 8 for undirected graphs; with the
    mutual degree δ and divisor 4 for directed ones.
    """
    _check_fits(G, net)
    backend = resolve_backend(backend, net)
    with net.phase("count_4cycles"):
        A = G.integer_matrix()
        A2 = backend.multiply(A, A, net).product.entries
        if G.directed:
            with net.phase("transpose"):
                inbox = net.route_oblivious(
                    Message(v, w, A2[v, w], tag=("A2", v)) for v in range(G.n) for w in range(G.n)
                )
            column = {v: np.array([m.payload for m in inbox[v]], dtype=object) for v in range(G.n)}
            degree = G.mutual_degrees
        else:
            column = {v: A2[v] for v in range(G.n)}
            degree = G.degrees
        contribution = []
        for v in range(G.n):
            closed = int(np.dot(A2[v], column[v])) if G.n else 0
            contribution.append(closed - (2 * int(degree[v]) ** 2 - int(degree[v])))
        total = _broadcast_trace(contribution, net)
    return CountResult(total // (4 if G.directed else 8), net.stats())


# ==================== COLOUR-CODING ====================

@dataclass
class ColourState:
    """Colour-restricted reachability C^(X) for the colour sets evaluated so far"""
    colouring: np.ndarray
    k: int
    reach: Dict[FrozenSet[int], SemiringMatrix] = field(default_factory=dict)
    prefixes: Dict[FrozenSet[int], SemiringMatrix] = field(default_factory=dict)
    products: int = 0


def _validate_colouring(G: Graph, colouring: Any, k: int) -> np.ndarray:
    if k < 3:
        raise ValueError(f"cycle length must be at least 3, got k={k}")
    colours = np.asarray(colouring, dtype=np.int64)
    if colours.shape != (G.n,):
        raise ValueError(f"colouring must assign one colour to each of {G.n} nodes")
    if G.n and (colours.min() < 0 or colours.max() >= k):
        raise ValueError(f"colours must lie in 0..{k - 1} for k={k}")
    return colours


def detect_colourful_kcycle(
    G: Graph,
    colouring: Any,
    k: int,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> DetectionResult:
    """
    Is there a k-cycle whose nodes carry k distinct colours?

    C^(X) = OR over Y ⊂ X, |Y| = ⌈|X|/2⌉ of C^(Y) A C^(X∖Y); a colourful cycle
    exists iff C^([k])_uv = 1 for some edge (v, u). Factors C^({i}) are diagonal,
    so products with them are local row or column masks.
    """
    _check_fits(G, net)
    colours = _validate_colouring(G, colouring, k)
    backend = resolve_backend(backend, net)
    A = G.boolean_matrix()
    state = ColourState(colours, k)

    def product(left: SemiringMatrix, right: SemiringMatrix) -> SemiringMatrix:
        state.products += 1
        return backend.multiply(left, right, net).product

    def row_mask(M: SemiringMatrix, colour: int) -> SemiringMatrix:
        return SemiringMatrix.wrap(BOOLEAN, M.entries & (colours == colour)[:, None])

    def column_mask(M: SemiringMatrix, colour: int) -> SemiringMatrix:
        return SemiringMatrix.wrap(BOOLEAN, M.entries & (colours == colour)[None, :])

    def prefix(Y: FrozenSet[int]) -> SemiringMatrix:
        # C^(Y) A
        if Y not in state.prefixes:
            if len(Y) == 1:
                state.prefixes[Y] = row_mask(A, next(iter(Y)))
            else:
                state.prefixes[Y] = product(reach(Y), A)
        return state.prefixes[Y]

    def reach(X: FrozenSet[int]) -> SemiringMatrix:
        if X in state.reach:
            return state.reach[X]
        if len(X) == 1:
            out = SemiringMatrix.wrap(BOOLEAN, np.diag(colours == next(iter(X))))
        else:
            acc = np.zeros((G.n, G.n), dtype=bool)
            for chosen in combinations(sorted(X), math.ceil(len(X) / 2)):
                Y = frozenset(chosen)
                Z = X - Y
                left = prefix(Y)
                term = column_mask(left, next(iter(Z))) if len(Z) == 1 else product(left, reach(Z))
                acc |= term.entries
            out = SemiringMatrix.wrap(BOOLEAN, acc)
        state.reach[X] = out
        return out

    with net.phase("colourful_kcycle"):
        full = reach(frozenset(range(k))).entries
        # node u checks C_uv ∧ A_vu against its in-neighbourhood
        local = [bool((full[u] & A.entries[:, u]).any()) for u in range(G.n)]
        with net.phase("verdict"):
            verdict = any(net.broadcast_all(_padded(local, net.n, False)))

    return DetectionResult(verdict, net.stats(), details={"products": state.products, "state": state})


def default_trials(k: int, n: int) -> int:
    """⌈e^k ln n⌉ colourings give success probability 1 − 1/n (at least one trial)."""
    return max(1, math.ceil(math.exp(k) * math.log(max(n, 1))))


def random_colourings(n: int, k: int, seed: int) -> Iterator[np.ndarray]:
    """Uniform colourings every node derives from the shared seed."""
    trial = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([seed % (2 ** 64), k, trial]))
        yield rng.integers(0, k, size=n)
        trial += 1


def detect_kcycle(
    G: Graph,
    k: int,
    net: CliqueNetwork,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    colourings: Optional[Iterable[Any]] = None,
    backend: Optional[MatmulBackend] = None,
) -> DetectionResult:
    """Repeat colourful detection until a hit or `trials` colourings; never a false positive."""
    _check_fits(G, net)
    if k < 3:
        raise ValueError(f"cycle length must be at least 3, got k={k}")
    budget = default_trials(k, G.n) if trials is None else trials
    stream = colourings if colourings is not None else random_colourings(
        G.n, k, net.seed if seed is None else seed
    )
    used = 0
    found = False
    with net.phase("detect_kcycle"):
        for colouring in stream:
            if used >= budget:
                break
            used += 1
            if detect_colourful_kcycle(G, colouring, k, net, backend).found:
                found = True
                break
    logger.info("k=%d cycle %s after %d colourings", k, "found" if found else "not found", used)
    return DetectionResult(found, net.stats(), trials=used, details={"budget": budget})


# ==================== TILE PACKING ====================

def _tile_side(degree: int) -> int:
    if degree <= 0:
        return 0
    if degree < 4:
        return 1
    return 1 << ((degree // 4).bit_length() - 1)


@dataclass
class TilePacking:
    """
    Disjoint squares A(y) × B(y) of side f(y) inside [k] × [k].

    f(y) is deg(y)/4 rounded down to a power of two (1 for degrees 1..3), so every
    part N_A(y, a), N_B(y, b) of N(y) has at most 8 nodes.
    """
    k: int
    side: np.ndarray
    row_start: np.ndarray
    col_start: np.ndarray

    def A(self, y: int) -> range:
        return range(int(self.row_start[y]), int(self.row_start[y] + self.side[y]))

    def B(self, y: int) -> range:
        return range(int(self.col_start[y]), int(self.col_start[y] + self.side[y]))

    def parts(self, y: int, neighbours: np.ndarray) -> List[np.ndarray]:
        """N(y) cut into f(y) consecutive parts of near-equal size."""
        if self.side[y] == 0:
            return []
        return np.array_split(np.sort(np.asarray(neighbours, dtype=np.int64)), int(self.side[y]))


def pack_tiles(degrees: Iterable[int]) -> TilePacking:
    """
    Place tiles largest first: at each scale the free squares are split into four
    and handed out in order to nodes whose tile has that side.
    """
    degrees = np.asarray(list(degrees), dtype=np.int64)
    n = degrees.size
    if n == 0:
        return TilePacking(0, degrees, degrees, degrees)
    k = 1 << (n.bit_length() - 1)
    side = np.array([_tile_side(int(d)) for d in degrees], dtype=np.int64)
    if side.max() > k:
        raise TilePackingError(f"a tile of side {side.max()} does not fit in {k} x {k}")
    row_start = np.full(n, -1, dtype=np.int64)
    col_start = np.full(n, -1, dtype=np.int64)

    free = [(0, 0)]
    size = k
    for s in sorted({int(x) for x in side if x > 0}, reverse=True):
        while size > s:
            half = size // 2
            free = [
                (r + dr, c + dc)
                for r, c in free
                for dr, dc in ((0, 0), (0, half), (half, 0), (half, half))
            ]
            size = half
        cursor = 0
        for y in np.flatnonzero(side == s):
            if cursor >= len(free):
                raise TilePackingError(
                    f"out of {s} x {s} squares; Σ deg² is too large for a {k} x {k} packing"
                )
            row_start[y], col_start[y] = free[cursor]
            cursor += 1
        free = free[cursor:]
    return TilePacking(k, side, row_start, col_start)


# ==================== CONSTANT-ROUND 4-CYCLE DETECTION ====================

class FourCycleState(TypedDict):
    """State for the constant-round 4-cycle detector"""
    # Input
    net: CliqueNetwork
    neighbours: List[np.ndarray]

    # Phase outputs
    degrees: np.ndarray
    walk_counts: np.ndarray
    found: bool
    packing: Optional[TilePacking]
    inbox: Dict[int, List[Message]]
    copies: Dict[int, Dict[int, np.ndarray]]
    walks: Dict[int, Dict[Tuple[int, int], np.ndarray]]
    bag_sizes: Dict[int, int]

    current_step: int
    early_exit: bool


class FourCycleDetector:
    """
    Phase 1: every node x learns all degrees and checks |P(x,*,*)| =
    Σ_{y ∈ N(x)} deg(y) ≥ 2n − 1, which forces a 4-cycle.

    Phase 2 (Σ deg² < 2n²): tiles A(y) × B(y) are packed into the clique; y sends
    N_A(y, a) to a ∈ A(y), a forwards it to every b ∈ B(y), b builds the 2-walks
    W(y, b) = N(y) × {y} × N_B(y, b) and ships each walk (x, y, z) to x, who
    looks for a repeated endpoint z. Balanced routing calls run on fixed budgets,
    so the round count is one constant.
    """

    STEP_LOAD = 8
    GATHER_LOAD = 64

    def __init__(self):
        require_langgraph()
        self.workflow = self._build_workflow()

    def _build_workflow(self) -> StateGraph:
        workflow = StateGraph(FourCycleState)

        workflow.add_node("phase1_degrees", self._phase1_degrees)
        workflow.add_node("phase2_tiles", self._phase2_tiles)
        workflow.add_node("phase2_step1", self._phase2_step1)
        workflow.add_node("phase2_step2", self._phase2_step2)
        workflow.add_node("phase2_walks", self._phase2_walks)
        workflow.add_node("phase2_gather", self._phase2_gather)
        workflow.add_node("phase2_check", self._phase2_check)

        workflow.set_entry_point("phase1_degrees")
        workflow.add_conditional_edges(
            "phase1_degrees",
            self._after_phase1,
            {"stop": END, "continue": "phase2_tiles"},
        )
        workflow.add_edge("phase2_tiles", "phase2_step1")
        workflow.add_edge("phase2_step1", "phase2_step2")
        workflow.add_edge("phase2_step2", "phase2_walks")
        workflow.add_edge("phase2_walks", "phase2_gather")
        workflow.add_edge("phase2_gather", "phase2_check")
        workflow.add_edge("phase2_check", END)

        return workflow.compile()

    def _phase1_degrees(self, state: FourCycleState) -> FourCycleState:
        net = state["net"]
        n = net.n
        with net.phase("phase1"):
            degrees = np.array(net.broadcast_all([len(nb) for nb in state["neighbours"]]), dtype=np.int64)
            walk_counts = np.array([int(degrees[nb].sum()) for nb in state["neighbours"]], dtype=np.int64)
            flags = net.broadcast_all([int(c >= 2 * n - 1) for c in walk_counts])
        state["degrees"] = degrees
        state["walk_counts"] = walk_counts
        state["found"] = any(flags)
        state["early_exit"] = state["found"]
        state["current_step"] = 1
        return state

    def _after_phase1(self, state: FourCycleState) -> str:
        if state["found"]:
            logger.info("4-cycle forced by walk counts; stopping after phase 1")
            return "stop"
        return "continue"

    def _phase2_tiles(self, state: FourCycleState) -> FourCycleState:
        state["packing"] = pack_tiles(state["degrees"])
        state["current_step"] = 2
        return state

    def _phase2_step1(self, state: FourCycleState) -> FourCycleState:
        net, packing = state["net"], state["packing"]
        messages = []
        for y, nb in enumerate(state["neighbours"]):
            for index, (a, part) in enumerate(zip(packing.A(y), packing.parts(y, nb))):
                messages.append(Message(y, a, part, len(part), ("NA", y, index)))
        with net.phase("phase2/step1"):
            state["inbox"] = net.route_balanced(messages, self.STEP_LOAD, synchronize=True)
        state["current_step"] = 3
        return state

    def _phase2_step2(self, state: FourCycleState) -> FourCycleState:
        net, packing = state["net"], state["packing"]
        messages = []
        for a in range(net.n):
            for m in state["inbox"][a]:
                _, y, _ = m.tag
                for b in packing.B(y):
                    messages.append(Message(a, b, m.payload, m.words, m.tag))
        with net.phase("phase2/step2"):
            inbox = net.route_balanced(messages, self.STEP_LOAD, synchronize=True)

        copies: Dict[int, Dict[int, np.ndarray]] = {}
        for b in range(net.n):
            pieces: Dict[int, List[Tuple[int, np.ndarray]]] = {}
            for m in inbox[b]:
                _, y, index = m.tag
                pieces.setdefault(y, []).append((index, m.payload))
            copies[b] = {
                y: np.concatenate([p for _, p in sorted(parts, key=lambda t: t[0])])
                for y, parts in pieces.items()
            }
        state["copies"] = copies
        state["inbox"] = {}
        state["current_step"] = 4
        return state

    def _phase2_walks(self, state: FourCycleState) -> FourCycleState:
        net, packing = state["net"], state["packing"]
        walks: Dict[int, Dict[Tuple[int, int], np.ndarray]] = {}
        sizes: Dict[int, int] = {}
        for b in range(net.n):
            bag: Dict[Tuple[int, int], np.ndarray] = {}
            for y, nb in state["copies"][b].items():
                part = packing.parts(y, nb)[b - packing.col_start[y]]
                for x in nb:
                    # W(y, b) = N(y) × {y} × N_B(y, b), grouped by endpoint x
                    bag[(int(x), y)] = part
            walks[b] = bag
            sizes[b] = int(sum(len(z) for z in bag.values()))
        state["walks"] = walks
        state["bag_sizes"] = sizes
        state["current_step"] = 5
        return state

    def _phase2_gather(self, state: FourCycleState) -> FourCycleState:
        net = state["net"]
        messages = [
            Message(b, x, (y, zs), len(zs), ("walk", y))
            for b in range(net.n)
            for (x, y), zs in state["walks"][b].items()
        ]
        with net.phase("phase2/gather"):
            state["inbox"] = net.route_balanced(messages, self.GATHER_LOAD, synchronize=True)
        state["walks"] = {}
        state["current_step"] = 6
        return state

    def _phase2_check(self, state: FourCycleState) -> FourCycleState:
        net = state["net"]
        local = []
        for x in range(net.n):
            # P(x, *, z) for z != x; a repeated z closes a 4-cycle
            endpoints = [int(z) for m in state["inbox"][x] for z in m.payload[1] if z != x]
            local.append(len(endpoints) != len(set(endpoints)))
        with net.phase("phase2/verdict"):
            state["found"] = any(net.broadcast_all(local))
        state["inbox"] = {}
        state["current_step"] = 7
        return state

    def detect(self, G: Graph, net: CliqueNetwork) -> DetectionResult:
        _check_fits(G, net)
        if G.directed:
            raise ValueError("the constant-round detector takes undirected graphs")
        neighbours = [G.neighbours(v) for v in range(G.n)]
        neighbours += [np.zeros(0, dtype=np.int64)] * (net.n - G.n)
        initial_state: FourCycleState = {
            "net": net,
            "neighbours": neighbours,
            "degrees": np.zeros(net.n, dtype=np.int64),
            "walk_counts": np.zeros(net.n, dtype=np.int64),
            "found": False,
            "packing": None,
            "inbox": {},
            "copies": {},
            "walks": {},
            "bag_sizes": {},
            "current_step": 0,
            "early_exit": False,
        }
        with net.phase("detect_4cycle"):
            final_state = self.workflow.invoke(initial_state)
        return DetectionResult(
            bool(final_state["found"]),
            net.stats(),
            details={
                "early_exit": final_state["early_exit"],
                "walk_counts": final_state["walk_counts"],
                "packing": final_state["packing"],
                "bag_sizes": final_state["bag_sizes"],
            },
        )


_four_cycle_detector: Optional[FourCycleDetector] = None


def detect_4cycle_constant(G: Graph, net: CliqueNetwork) -> DetectionResult:
    global _four_cycle_detector
    if _four_cycle_detector is None:
        _four_cycle_detector = FourCycleDetector()
    return _four_cycle_detector.detect(G, net)
