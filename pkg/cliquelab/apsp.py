"""
All-Pairs Shortest Paths on the Congested Clique

- `apsp_semiring`: ⌈log₂ n⌉ distance-product squarings with argmin witnesses;
  handles negative weights and builds a next-hop routing table.
- `apsp_seidel`: unweighted undirected graphs through Boolean squaring and one
  integer product per recursion level.
- `dp_exact_small` / `apsp_bounded`: distance products of small entries through
  the polynomial embedding, and APSP truncated at distance M.
- `apsp_diameter`: exact APSP by doubling a distance guess U.
- `dp_approx` / `apsp_approx`: (1 + δ)-approximate distance products from
  rounded copies at geometric scales, iterated into approximate APSP.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Union

import numpy as np

from algebra import (
    BOOLEAN, INF, INTEGERS, MINPLUS, SemiringMatrix, is_inf, poly_embed, poly_extract,
)
from graph_schema import DistanceResult, Graph, NegativeCycleError, WeightMatrix
from matmul import MatmulBackend, ProductResult, cube_layout, mm_semiring, resolve_backend
from network import CliqueNetwork, RoundStats
from witness import UNKNOWN, bit_count, witness_general

logger = logging.getLogger(__name__)

Weights = Union[WeightMatrix, SemiringMatrix]


def _weights(W: Weights) -> SemiringMatrix:
    matrix = W.weights if isinstance(W, WeightMatrix) else W
    if matrix.semiring != MINPLUS:
        raise ValueError("distances are computed from a min-plus weight matrix")
    return matrix


def _check_fits(n: int, net: CliqueNetwork):
    if n > net.n:
        raise ValueError(f"a {n}-node input does not fit on a {net.n}-node clique")


def _finite_values(M: SemiringMatrix):
    return [v for v in M.entries.ravel() if not is_inf(v)]


def _finite_values_row(D: SemiringMatrix, v: int):
    return [w for w in D.entries[v] if not is_inf(w)]


def _require_nonnegative(D: SemiringMatrix, what: str):
    if any(v < 0 for v in _finite_values(D)):
        raise ValueError(f"{what} needs nonnegative weights")


def _truncate(D: SemiringMatrix, M: int) -> SemiringMatrix:
    """Entries above M become ∞."""
    out = np.array(D.entries, dtype=object)
    for index, value in np.ndenumerate(out):
        if not is_inf(value) and value > M:
            out[index] = INF
    return SemiringMatrix.wrap(MINPLUS, out)


def _without_diagonal(D: SemiringMatrix) -> SemiringMatrix:
    """W° : W with ∞ on the diagonal, so a witness of W° ⋆ D is a real first hop."""
    out = np.array(D.entries, dtype=object)
    np.fill_diagonal(out, INF)
    return SemiringMatrix.wrap(MINPLUS, out)


def _routes_from_witnesses(D: SemiringMatrix, Q: np.ndarray) -> np.ndarray:
    n = D.n
    routes = np.full((n, n), UNKNOWN, dtype=np.int64)
    finite = ~MINPLUS.is_zero(D.entries)
    routes[finite] = Q[finite]
    routes[np.arange(n), np.arange(n)] = np.arange(n)
    return routes


def _require_positive_off_diagonal(D: SemiringMatrix, what: str):
    off = D.entries[~np.eye(D.n, dtype=bool)]
    if any((not is_inf(v)) and v <= 0 for v in off):
        raise ValueError(f"{what} with routes needs positive edge weights")


# ==================== EXACT APSP ====================

def apsp_semiring(
    W: Weights,
    net: CliqueNetwork,
    with_routes: bool = True,
) -> DistanceResult:
    """
    Wⁿ by repeated squaring with the 3D algorithm.

    Weights are squared in the encoding w·K + hops (K = 4n), so among equal-weight
    walks the one with fewer hops wins; routing walks therefore always shorten and
    zero-weight cycles cannot trap them. R[u, v] = R[u, Q_uv] whenever a squaring
    strictly improves (u, v).
    """
    weights = _weights(W)
    n = weights.n
    _check_fits(n, net)
    K = 4 * n

    encoded = np.array(weights.entries, dtype=object)
    routes = np.full((n, n), UNKNOWN, dtype=np.int64)
    for (u, v), w in np.ndenumerate(weights.entries):
        if u == v:
            # a negative self-loop is a negative cycle; the first squaring reports it
            encoded[u, v] = w * K + 1 if not is_inf(w) and w < 0 else 0
            routes[u, v] = u
        elif not is_inf(w):
            encoded[u, v] = w * K + 1
            routes[u, v] = v
    D = SemiringMatrix.wrap(MINPLUS, encoded)
    Q = np.full((n, n), UNKNOWN, dtype=np.int64)

    squarings = bit_count(n)
    with net.phase("apsp_semiring"):
        for step in range(squarings):
            result = mm_semiring(D, D, net, with_witness=True)
            D2, Q = result.product, result.witnesses
            improved = np.asarray(np.less(D2.entries, D.entries), dtype=bool)
            us, vs = np.nonzero(improved)
            updated = routes.copy()
            updated[us, vs] = routes[us, Q[us, vs]]
            routes, D = updated, D2

            diagonal = [D[v, v] for v in range(n)]
            flags = [int(d < 0) for d in diagonal] + [0] * (net.n - n)
            with net.phase("negative_check"):
                if any(net.broadcast_all(flags)):
                    node = next(v for v, d in enumerate(diagonal) if d < 0)
                    raise NegativeCycleError(node)
            logger.debug("apsp_semiring: squaring %d of %d, %d entries improved", step + 1, squarings, len(us))

    decoded = np.array(D.entries, dtype=object)
    for index, value in np.ndenumerate(decoded):
        if not is_inf(value):
            decoded[index] = value // K
    return DistanceResult(
        SemiringMatrix.wrap(MINPLUS, decoded),
        routes=routes if with_routes else None,
        witnesses=Q,
        stats=net.stats(),
        details={"squarings": squarings},
    )


def apsp_seidel(
    G: Graph,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> DistanceResult:
    """Hop distances of an unweighted undirected graph (∞ across components)."""
    if G.directed:
        raise ValueError("Seidel's algorithm takes undirected graphs")
    if G.has_self_loops():
        raise ValueError("Seidel's algorithm takes a simple graph")
    _check_fits(G.n, net)
    backend = resolve_backend(backend, net)

    def solve(A: np.ndarray, depth: int) -> np.ndarray:
        # distances as int64 with -1 for ∞
        n = A.shape[0]
        label = f"depth{depth}"
        with net.phase(label):
            Z = backend.multiply(SemiringMatrix(BOOLEAN, A), SemiringMatrix(BOOLEAN, A), net).product.entries
            Z = Z | A
            np.fill_diagonal(Z, False)
            unchanged = [bool(np.array_equal(Z[v], A[v])) for v in range(n)] + [True] * (net.n - n)
            with net.phase("closed"):
                done = all(net.broadcast_all(unchanged))
        if done:
            # G = G²: disjoint cliques
            D = np.where(A, 1, -1).astype(np.int64)
            np.fill_diagonal(D, 0)
            return D

        D2 = solve(Z, depth + 1)
        with net.phase(label):
            lifted = SemiringMatrix.wrap(INTEGERS, np.where(D2 < 0, 0, D2).astype(object))
            S = backend.multiply(lifted, SemiringMatrix.wrap(INTEGERS, A.astype(np.int64).astype(object)), net)
            S = np.asarray(S.product.entries, dtype=np.int64)
            with net.phase("degrees"):
                degrees = np.array(net.broadcast_all(list(A.sum(axis=1)) + [0] * (net.n - n))[:n], dtype=np.int64)
        # d_G is even exactly when Σ_{w ∈ N(v)} d_{G²}(u, w) ≥ deg(v)·d_{G²}(u, v)
        even = S >= D2 * degrees[None, :]
        D = np.where(D2 < 0, -1, np.where(even, 2 * D2, 2 * D2 - 1))
        np.fill_diagonal(D, 0)
        return D

    with net.phase("apsp_seidel"):
        D = solve(np.array(G.adjacency, dtype=bool), 0)
    out = MINPLUS.zeros((G.n, G.n))
    finite = D >= 0
    out[finite] = D[finite].astype(object)
    return DistanceResult(SemiringMatrix.wrap(MINPLUS, out), stats=net.stats())


# ==================== EMBEDDING-BASED PRODUCTS ====================

def dp_exact_small(
    S: SemiringMatrix,
    T: SemiringMatrix,
    M: int,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> ProductResult:
    """S ⋆ T for entries in {0..M, ∞}, as one ring product of X^s polynomials."""
    if M < 0:
        raise ValueError(f"entry bound M must be nonnegative, got {M}")
    # auto picks mm_bilinear on 7^L cliques and the 3D product on cubes
    backend = resolve_backend(backend, net)
    S_poly, T_poly = poly_embed(S, M), poly_embed(T, M)
    with net.phase("dp_exact_small"):
        P = backend.multiply(S_poly, T_poly, net).product
    return ProductResult(poly_extract(P), net.stats())


def _embedded_product(M: int, net: CliqueNetwork, backend: Optional[MatmulBackend]):
    def product(S: SemiringMatrix, T: SemiringMatrix) -> SemiringMatrix:
        return dp_exact_small(S, T, M, net, backend).product
    return product


def _witness_routes(
    W: SemiringMatrix,
    D: SemiringMatrix,
    M: int,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend],
) -> Dict[str, Any]:
    """Next hops from witnesses of W° ⋆ D, both truncated at M."""
    first_hop = _truncate(_without_diagonal(W), M)
    product = _embedded_product(M, net, backend)
    with net.phase("routes"):
        P = product(first_hop, D)
        found = witness_general(first_hop, D, P, product, net=net)
    routes = _routes_from_witnesses(D, found.Q)
    return {"routes": routes, "witnesses": found.Q, "unknown_routes": sorted(found.unknown)}


def apsp_bounded(
    W: Weights,
    M: int,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
    with_routes: bool = False,
) -> DistanceResult:
    """d(u, v) where it is at most M, ∞ elsewhere; weights over M are cut before each squaring."""
    weights = _weights(W)
    _require_nonnegative(weights, "apsp_bounded")
    if with_routes:
        _require_positive_off_diagonal(weights, "apsp_bounded")
    if M < 0:
        raise ValueError(f"distance bound M must be nonnegative, got {M}")
    _check_fits(weights.n, net)

    squarings = bit_count(weights.n)
    D = weights
    with net.phase("apsp_bounded"):
        for _ in range(squarings):
            D = _truncate(D, M)
            D = dp_exact_small(D, D, M, net, backend).product
        D = _truncate(D, M)
        extra = _witness_routes(weights, D, M, net, backend) if with_routes else {}

    return DistanceResult(
        D,
        routes=extra.get("routes"),
        witnesses=extra.get("witnesses"),
        stats=net.stats(),
        details={"M": M, "squarings": squarings, **({"unknown_routes": extra["unknown_routes"]} if extra else {})},
    )


def apsp_diameter(
    W: Weights,
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
    with_routes: bool = False,
) -> DistanceResult:
    """
    Exact APSP for positive weights without knowing the diameter: reachability by
    Boolean squaring, then U = 1, 2, 4, ... until apsp_bounded(W, U) is finite on
    every reachable pair.
    """
    weights = _weights(W)
    _require_positive_off_diagonal(weights, "apsp_diameter")
    n = weights.n
    _check_fits(n, net)
    backend = resolve_backend(backend, net)

    with net.phase("apsp_diameter"):
        reach = ~MINPLUS.is_zero(weights.entries)
        np.fill_diagonal(reach, True)
        R = SemiringMatrix(BOOLEAN, reach)
        with net.phase("reachability"):
            for _ in range(bit_count(n)):
                R = backend.multiply(R, R, net).product

        U = 1
        while True:
            bounded = apsp_bounded(weights, U, net, backend)
            finite = ~MINPLUS.is_zero(bounded.distances.entries)
            covered = [bool(np.all(finite[v] | ~R.entries[v])) for v in range(n)] + [True] * (net.n - n)
            with net.phase("coverage"):
                done = all(net.broadcast_all(covered))
            logger.info("apsp_diameter: guess U=%d %s", U, "covers all reachable pairs" if done else "is too small")
            if done:
                break
            U *= 2

        extra = _witness_routes(weights, bounded.distances, U, net, backend) if with_routes else {}

    return DistanceResult(
        bounded.distances,
        routes=extra.get("routes"),
        witnesses=extra.get("witnesses"),
        stats=net.stats(),
        details={"final_U": U, **({"unknown_routes": extra["unknown_routes"]} if extra else {})},
    )


# ==================== APPROXIMATE PRODUCTS ====================

def as_fraction(value: Union[float, int, str, Fraction]) -> Fraction:
    """Exact rational for δ (floats are read through their decimal form)."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass
class ApproxLevel:
    """Entries rounded up to multiples of (1+δ)^i, dropped above 2(1+δ)^(i+1)/δ"""
    index: int
    scale: Fraction
    cutoff: Fraction
    left: SemiringMatrix
    right: SemiringMatrix
    product: Optional[SemiringMatrix] = None


@dataclass
class ApproxProduct:
    product: SemiringMatrix
    levels: List[ApproxLevel]
    delta: Fraction
    stats: RoundStats


def level_count(M: int, delta: Fraction) -> int:
    """⌈log_{1+δ} M⌉ + 1 levels (one for M ≤ 1)."""
    if M <= 1:
        return 1
    i = 0
    scale = Fraction(1)
    while scale < M:
        scale *= 1 + delta
        i += 1
    return i + 1


def level_bound(delta: Fraction) -> int:
    """Largest finite entry of a rounded level matrix"""
    return math.ceil(2 * (1 + delta) / delta)


def _scaled(D: SemiringMatrix, scale: Fraction, cutoff: Fraction) -> SemiringMatrix:
    out = MINPLUS.zeros((D.n, D.n))
    for index, value in np.ndenumerate(D.entries):
        if not is_inf(value) and value <= cutoff:
            out[index] = math.ceil(Fraction(value) / scale)
    return SemiringMatrix.wrap(MINPLUS, out)


def dp_approx(
    S: SemiringMatrix,
    T: SemiringMatrix,
    M: int,
    delta: Union[float, Fraction],
    net: CliqueNetwork,
    backend: Optional[MatmulBackend] = None,
) -> ApproxProduct:
    """
    P̃ with P ≤ P̃ ≤ (1+δ)P: for every level i the rounded matrices S^(i), T^(i)
    are multiplied exactly with entries ≤ ⌈2(1+δ)/δ⌉, and
    P̃_uv = min_i ⌊(1+δ)^i P^(i)_uv⌋.
    """
    delta = as_fraction(delta)
    if delta <= 0:
        raise ValueError(f"accuracy δ must be positive, got {delta}")
    for D in (S, T):
        for value in _finite_values(D):
            if value < 0 or value > M:
                raise ValueError(f"entry {value} outside {{0..{M}}} ∪ {{inf}}")

    bound = level_bound(delta)
    levels: List[ApproxLevel] = []
    best = MINPLUS.zeros((S.n, S.n))
    with net.phase("dp_approx"):
        for i in range(level_count(M, delta)):
            scale = (1 + delta) ** i
            cutoff = 2 * (1 + delta) ** (i + 1) / delta
            level = ApproxLevel(i, scale, cutoff, _scaled(S, scale, cutoff), _scaled(T, scale, cutoff))
            level.product = dp_exact_small(level.left, level.right, bound, net, backend).product
            for index, value in np.ndenumerate(level.product.entries):
                if not is_inf(value):
                    candidate = math.floor(scale * value)
                    if is_inf(best[index]) or candidate < best[index]:
                        best[index] = candidate
            levels.append(level)
    return ApproxProduct(SemiringMatrix.wrap(MINPLUS, best), levels, delta, net.stats())


def default_delta(n: int) -> Fraction:
    """1 / ⌈log₂ n⌉²"""
    bits = max(bit_count(n), 1)
    return Fraction(1, bits * bits)


def apsp_approx(
    W: Weights,
    net: CliqueNetwork,
    delta: Optional[Union[float, Fraction]] = None,
    backend: Optional[MatmulBackend] = None,
    with_routes: bool = False,
) -> DistanceResult:
    """
    ⌈log₂ n⌉ approximate squarings; d ≤ D̃ ≤ (1+δ)^⌈log₂ n⌉ d. Routes, when asked
    for, come from witnesses of one min-plus product W° ⋆ D̃ and are approximate.
    """
    weights = _weights(W)
    _require_nonnegative(weights, "apsp_approx")
    n = weights.n
    _check_fits(n, net)
    delta = default_delta(n) if delta is None else as_fraction(delta)
    if delta <= 0:
        raise ValueError(f"accuracy δ must be positive, got {delta}")
    if with_routes:
        # min-plus witnesses only come out of the 3D semiring product
        cube_layout(net.n)
        route_backend = MatmulBackend("semiring3d")

    squarings = bit_count(n)
    D = weights
    with net.phase("apsp_approx"):
        for _ in range(squarings):
            row_max = [max(_finite_values_row(D, v), default=0) for v in range(n)] + [0] * (net.n - n)
            with net.phase("bound"):
                M = int(max(net.broadcast_all(row_max)))
            D = dp_approx(D, D, M, delta, net, backend).product
        routes = witnesses = None
        if with_routes:
            result = route_backend.multiply(_without_diagonal(weights), D, net, with_witness=True)
            witnesses = result.witnesses
            routes = _routes_from_witnesses(D, witnesses)

    return DistanceResult(
        D,
        routes=routes,
        witnesses=witnesses,
        approximate=True,
        stats=net.stats(),
        details={
            "delta": str(delta),
            "squarings": squarings,
            "factor_bound": float((1 + delta) ** squarings),
        },
    )
