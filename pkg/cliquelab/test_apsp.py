#!/usr/bin/env python3
"""
Tests for the all-pairs shortest path algorithms and distance products
"""

import sys
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

# Add package directory to path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir))

from algebra import INF, MINPLUS, EmbeddingRangeError, SemiringMatrix, is_inf, minplus_matrix
from apsp import (
    NegativeCycleError, apsp_approx, apsp_bounded, apsp_diameter, apsp_seidel, apsp_semiring,
    as_fraction, default_delta, dp_approx, dp_exact_small, level_bound, level_count,
)
from graph_schema import DistanceResult, Graph, WeightMatrix
from matmul import MatmulBackend, NodeCountError
from network import CliqueNetwork
from oracle import bfs_all, floyd_warshall, mat_mul_oracle


def _random_weights(n, rng, low=1, high=9, density=0.4):
    """Positive (or shifted) weights with a zero diagonal"""
    values = rng.integers(low, high + 1, size=(n, n)).astype(object)
    values[rng.random((n, n)) >= density] = INF
    np.fill_diagonal(values, 0)
    return WeightMatrix(SemiringMatrix(MINPLUS, values))


def _with_potentials(W, rng):
    """Reweight w(u, v) + p(u) - p(v): negative entries, no negative cycles"""
    n = W.n
    p = rng.integers(0, 6, size=n)
    values = np.array(W.weights.entries, dtype=object)
    for (u, v), w in np.ndenumerate(values):
        if u != v and not is_inf(w):
            values[u, v] = w + int(p[u]) - int(p[v])
    return WeightMatrix(SemiringMatrix(MINPLUS, values))


def _truncated(D, M):
    out = np.array(D.entries, dtype=object)
    for index, value in np.ndenumerate(out):
        if not is_inf(value) and value > M:
            out[index] = INF
    return SemiringMatrix.wrap(MINPLUS, out)


def _assert_routes_realise_distances(result, W):
    for u in range(result.n):
        for v in range(result.n):
            if is_inf(result.distances[u, v]):
                continue
            path = result.walk(u, v)
            assert path[0] == u and path[-1] == v
            assert sum(W.weights[a, b] for a, b in zip(path, path[1:])) == result.distances[u, v]


# ==================== SEMIRING SQUARING ====================

@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("n, clique", [(8, 8), (12, 27)])
def test_semiring_apsp_with_negative_weights(seed, n, clique):
    rng = np.random.default_rng(seed)
    W = _with_potentials(_random_weights(n, rng), rng)
    result = apsp_semiring(W, CliqueNetwork(clique))
    assert result.distances == floyd_warshall(W)
    assert result.details["squarings"] == (3 if n == 8 else 4)
    _assert_routes_realise_distances(result, W)


def test_zero_weight_cycles_do_not_trap_routes():
    W = WeightMatrix.from_edges(4, [(0, 1, 0), (1, 0, 0), (1, 2, 0), (2, 1, 0), (2, 3, 5)])
    result = apsp_semiring(W, CliqueNetwork(8))
    assert result.distances[0, 3] == 5
    assert result.walk(0, 3) == [0, 1, 2, 3]


def test_unreachable_pairs():
    W = WeightMatrix.from_edges(3, [(0, 1, 2)])
    result = apsp_semiring(W, CliqueNetwork(8))
    assert result.distances[1, 0] == INF
    assert result.routes[1, 0] == -1
    with pytest.raises(ValueError):
        result.walk(1, 0)


def test_negative_cycle_detected():
    W = WeightMatrix.from_edges(4, [(0, 1, 2), (1, 2, -3), (2, 0, 0), (2, 3, 1)])
    with pytest.raises(NegativeCycleError) as excinfo:
        apsp_semiring(W, CliqueNetwork(8))
    assert excinfo.value.node in (0, 1, 2)


def test_negative_self_loop_detected():
    W = minplus_matrix([[-1, 3], [INF, 0]])
    with pytest.raises(NegativeCycleError):
        apsp_semiring(W, CliqueNetwork(8))


def test_routes_can_be_dropped():
    W = _random_weights(8, np.random.default_rng(3))
    result = apsp_semiring(W, CliqueNetwork(8), with_routes=False)
    assert result.routes is None
    assert result.witnesses is not None
    assert result.stats.rounds_under("apsp_semiring/negative_check") == 3


# ==================== SEIDEL ====================

@pytest.mark.parametrize("graph", [
    nx.petersen_graph(),
    nx.path_graph(8),
    nx.cycle_graph(11),
    nx.disjoint_union(nx.path_graph(4), nx.complete_graph(3)),
    nx.empty_graph(5),
])
def test_seidel_matches_bfs(graph):
    G = Graph.from_networkx(graph)
    assert apsp_seidel(G, CliqueNetwork(27)).distances == bfs_all(G)


@pytest.mark.parametrize("seed", range(4))
def test_seidel_random_graphs(seed):
    G = Graph.from_networkx(nx.gnp_random_graph(16, 0.15, seed=seed))
    assert apsp_seidel(G, CliqueNetwork(27)).distances == bfs_all(G)


def test_seidel_with_bilinear_backend():
    G = Graph.from_networkx(nx.path_graph(7))
    result = apsp_seidel(G, CliqueNetwork(7), MatmulBackend("bilinear", 1))
    assert result.distances == bfs_all(G)
    assert result.stats.rounds_under("apsp_seidel/depth0") > 0


def test_seidel_rejects_digraphs():
    with pytest.raises(ValueError):
        apsp_seidel(Graph.from_edges(3, [(0, 1)], directed=True), CliqueNetwork(8))


# ==================== SMALL-ENTRY PRODUCTS ====================

@pytest.mark.parametrize("seed", range(4))
def test_dp_exact_small(seed):
    rng = np.random.default_rng(seed)
    M = 4
    values = [rng.integers(0, M + 1, size=(8, 8)).astype(object) for _ in range(2)]
    for v in values:
        v[rng.random((8, 8)) < 0.3] = INF
    S, T = (SemiringMatrix(MINPLUS, v) for v in values)
    assert dp_exact_small(S, T, M, CliqueNetwork(8)).product == mat_mul_oracle(S, T)


def test_dp_exact_small_rejects_large_entries():
    S = minplus_matrix([[0, 5], [INF, 0]])
    with pytest.raises(EmbeddingRangeError):
        dp_exact_small(S, S, 4, CliqueNetwork(8))
    with pytest.raises(ValueError):
        dp_exact_small(S, S, -1, CliqueNetwork(8))


@pytest.mark.parametrize("M", [0, 2, 5, 40])
def test_bounded_apsp(M):
    W = _random_weights(8, np.random.default_rng(M), low=0, high=3)
    result = apsp_bounded(W, M, CliqueNetwork(8))
    assert result.distances == _truncated(floyd_warshall(W), M)
    assert result.details["M"] == M


def test_bounded_apsp_with_routes():
    W = _random_weights(8, np.random.default_rng(7), low=1, high=3, density=0.5)
    result = apsp_bounded(W, 6, CliqueNetwork(8), with_routes=True)
    assert result.details["unknown_routes"] == []
    _assert_routes_realise_distances(result, W)


def test_bounded_apsp_with_bilinear_backend():
    W = _random_weights(7, np.random.default_rng(2), low=0, high=2)
    result = apsp_bounded(W, 3, CliqueNetwork(7), MatmulBackend("bilinear", 1))
    assert result.distances == _truncated(floyd_warshall(W), 3)


def test_bounded_apsp_input_checks():
    W = minplus_matrix([[0, -1], [INF, 0]])
    with pytest.raises(ValueError):
        apsp_bounded(W, 3, CliqueNetwork(8))
    zero = WeightMatrix.from_edges(2, [(0, 1, 0)])
    with pytest.raises(ValueError):
        apsp_bounded(zero, 3, CliqueNetwork(8), with_routes=True)


@pytest.mark.parametrize("seed", range(3))
def test_diameter_doubling(seed):
    W = _random_weights(8, np.random.default_rng(seed), low=1, high=6, density=0.3)
    result = apsp_diameter(W, CliqueNetwork(8), with_routes=True)
    exact = floyd_warshall(W)
    assert result.distances == exact
    finite = [d for d in exact.entries.ravel() if not is_inf(d)]
    U = result.details["final_U"]
    assert U >= max(finite)
    assert U == 1 or U // 2 < max(finite)
    _assert_routes_realise_distances(result, W)


def test_diameter_needs_positive_weights():
    W = WeightMatrix.from_edges(3, [(0, 1, 0), (1, 2, 1)])
    with pytest.raises(ValueError):
        apsp_diameter(W, CliqueNetwork(8))


# ==================== APPROXIMATION ====================

def test_level_helpers():
    assert level_count(1, Fraction(1, 2)) == 1
    assert level_count(8, Fraction(1, 2)) == 7
    assert level_bound(Fraction(1, 2)) == 6
    assert level_bound(Fraction(1, 9)) == 20
    assert default_delta(8) == Fraction(1, 9)
    assert default_delta(2) == 1
    assert as_fraction(0.1) == Fraction(1, 10)


@pytest.mark.parametrize("seed", range(4))
def test_dp_approx_sandwich(seed):
    rng = np.random.default_rng(seed)
    M = 12
    values = [rng.integers(0, M + 1, size=(8, 8)).astype(object) for _ in range(2)]
    for v in values:
        v[rng.random((8, 8)) < 0.3] = INF
    S, T = (SemiringMatrix(MINPLUS, v) for v in values)
    delta = Fraction(1, 2)
    approx = dp_approx(S, T, M, delta, CliqueNetwork(8))
    exact = mat_mul_oracle(S, T)
    for (u, v), p in np.ndenumerate(exact.entries):
        q = approx.product[u, v]
        if is_inf(p):
            assert is_inf(q)
        else:
            assert p <= q <= (1 + delta) * p
    assert len(approx.levels) == level_count(M, delta)
    assert all(level.product is not None for level in approx.levels)


def test_dp_approx_checks_inputs():
    S = minplus_matrix([[0, 9], [INF, 0]])
    with pytest.raises(ValueError):
        dp_approx(S, S, 4, 0.5, CliqueNetwork(8))
    with pytest.raises(ValueError):
        dp_approx(S, S, 9, 0, CliqueNetwork(8))


@pytest.mark.parametrize("seed", range(3))
def test_approx_apsp_factor(seed):
    W = _random_weights(8, np.random.default_rng(seed), low=0, high=9, density=0.35)
    result = apsp_approx(W, CliqueNetwork(8), delta=0.5)
    exact = floyd_warshall(W)
    factor = Fraction(3, 2) ** 3
    assert result.approximate
    assert result.details["factor_bound"] == pytest.approx(float(factor))
    for (u, v), d in np.ndenumerate(exact.entries):
        q = result.distances[u, v]
        if is_inf(d):
            assert is_inf(q)
        else:
            assert d <= q <= factor * d


def test_approx_apsp_routes_are_first_hops():
    W = _random_weights(8, np.random.default_rng(5), low=1, high=5, density=0.4)
    result = apsp_approx(W, CliqueNetwork(8), delta=Fraction(1, 2), with_routes=True)
    for (u, v), hop in np.ndenumerate(result.routes):
        if u == v:
            assert hop == u
        elif not is_inf(result.distances[u, v]):
            assert not is_inf(W.weights[u, int(hop)])


def test_approx_apsp_routes_need_a_cube_clique():
    W = _random_weights(7, np.random.default_rng(3), low=1, high=5)
    net = CliqueNetwork(7)
    with pytest.raises(NodeCountError):
        apsp_approx(W, net, delta=0.5, with_routes=True)
    assert net.round_counter == 0
    result = apsp_approx(W, CliqueNetwork(7), delta=0.5)
    assert result.routes is None
    assert result.stats.rounds_under("apsp_approx/dp_approx/dp_exact_small/mm_bilinear") > 0


def test_approx_apsp_default_delta():
    W = _random_weights(8, np.random.default_rng(1))
    assert apsp_approx(W, CliqueNetwork(8)).details["delta"] == "1/9"


# ==================== RESULTS ====================

def test_distance_result_documents():
    W = WeightMatrix.from_edges(3, [(0, 1, 2), (1, 2, 3)])
    result = apsp_semiring(W, CliqueNetwork(8))
    doc = result.to_dict()
    assert doc["distances"] == [[0, 2, 5], ["inf", 0, 3], ["inf", "inf", 0]]
    assert doc["routes"][0] == [0, 1, 1]
    assert doc["stats"]["algorithm"] == "apsp_semiring"
    lines = result.to_csv().splitlines()
    assert lines[0] == "u,v,distance,next_hop"
    assert "0,2,5,1" in lines
    assert "1,0,inf," in lines


def test_walk_without_routes():
    result = DistanceResult(minplus_matrix([[0, 1], [1, 0]]))
    with pytest.raises(ValueError):
        result.walk(0, 1)
