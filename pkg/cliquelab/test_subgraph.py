#!/usr/bin/env python3
"""
Tests for cycle counting, colour-coding detection and the constant-round 4-cycle detector
"""

import sys
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

# Add package directory to path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir))

from graph_schema import Graph
from matmul import MatmulBackend
from network import CliqueNetwork, balanced_round_budget
from oracle import count_kcycles_brute
from subgraph import (
    FourCycleDetector, TilePackingError, _tile_side, count_4cycles, count_triangles,
    default_trials, detect_4cycle_constant, detect_colourful_kcycle, detect_kcycle,
    pack_tiles, random_colourings,
)

PHASE2_ROUNDS = (
    2
    + 2 * balanced_round_budget(FourCycleDetector.STEP_LOAD)
    + balanced_round_budget(FourCycleDetector.GATHER_LOAD)
    + 1
)


@pytest.fixture
def k4():
    return Graph.from_networkx(nx.complete_graph(4))


@pytest.fixture
def petersen():
    return Graph.from_networkx(nx.petersen_graph())


def _cycle(n):
    return Graph.from_networkx(nx.cycle_graph(n))


# ==================== COUNTING ====================

def test_triangles_in_k4(k4):
    result = count_triangles(k4, CliqueNetwork(8))
    assert result.count == 4
    assert result.stats.phase("count_triangles/trace").rounds == 1


def test_triangle_count_with_bilinear_backend(k4):
    result = count_triangles(k4, CliqueNetwork(7), MatmulBackend("bilinear", 1))
    assert result.count == 4


def test_four_cycles_in_k4(k4):
    assert count_4cycles(k4, CliqueNetwork(8)).count == 3


def test_petersen_has_no_short_cycles(petersen):
    net = CliqueNetwork(27)
    assert count_triangles(petersen, net).count == 0
    assert count_4cycles(petersen, net).count == 0


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("directed", [False, True])
def test_counts_match_enumeration(seed, directed):
    G = Graph.from_networkx(nx.gnp_random_graph(12, 0.35, seed=seed, directed=directed))
    assert count_triangles(G, CliqueNetwork(27)).count == count_kcycles_brute(G, 3)
    assert count_4cycles(G, CliqueNetwork(27)).count == count_kcycles_brute(G, 4)


def test_directed_two_cycles_are_not_four_cycles():
    G = Graph.from_edges(3, [(0, 1), (1, 0), (1, 2), (2, 1)], directed=True)
    assert count_4cycles(G, CliqueNetwork(8)).count == 0


def test_graph_larger_than_clique_rejected(petersen):
    with pytest.raises(ValueError):
        count_triangles(petersen, CliqueNetwork(8))


# ==================== COLOUR-CODING ====================

def test_colourful_cycle_found():
    G = _cycle(5)
    result = detect_colourful_kcycle(G, [0, 1, 2, 3, 4], 5, CliqueNetwork(8))
    assert result.found
    assert result.details["products"] > 0


def test_repeated_colour_hides_the_cycle():
    G = _cycle(5)
    assert not detect_colourful_kcycle(G, [0, 0, 1, 2, 3], 5, CliqueNetwork(8)).found


def test_colourful_cycle_in_digraph_respects_direction():
    forward = Graph.from_edges(3, [(0, 1), (1, 2), (2, 0)], directed=True)
    path = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)], directed=True)
    assert detect_colourful_kcycle(forward, [0, 1, 2], 3, CliqueNetwork(8)).found
    assert not detect_colourful_kcycle(path, [0, 1, 2], 3, CliqueNetwork(8)).found


def test_colourful_subsets_are_memoised():
    result = detect_colourful_kcycle(_cycle(6), [0, 1, 2, 3, 4, 5], 6, CliqueNetwork(8))
    state = result.details["state"]
    assert frozenset(range(6)) in state.reach
    assert all(len(X) >= 1 for X in state.reach)


@pytest.mark.parametrize("colouring, k", [([0, 1, 2], 2), ([0, 1], 3), ([0, 1, 3], 3), ([0, -1, 2], 3)])
def test_invalid_colourings_rejected(colouring, k):
    G = Graph.from_edges(3, [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(ValueError):
        detect_colourful_kcycle(G, colouring, k, CliqueNetwork(8))


def test_detect_kcycle_stops_at_first_hit():
    G = _cycle(6)
    colourings = [np.zeros(6, dtype=int), np.arange(6), np.arange(6)]
    result = detect_kcycle(G, 6, CliqueNetwork(8), colourings=colourings)
    assert result.found
    assert result.trials == 2


def test_detect_kcycle_on_a_tree_uses_the_whole_budget():
    tree = Graph.from_networkx(nx.balanced_tree(2, 2))
    result = detect_kcycle(tree, 3, CliqueNetwork(8), seed=3, trials=5)
    assert not result.found
    assert result.trials == 5
    assert result.details["budget"] == 5


def test_detect_kcycle_random_colourings(k4):
    result = detect_kcycle(k4, 3, CliqueNetwork(8), seed=17)
    assert result.found
    assert result.trials <= default_trials(3, 4)


def test_default_trials():
    assert default_trials(3, 8) == 42
    assert default_trials(5, 1) == 1


def test_random_colourings_are_shared():
    first = random_colourings(10, 4, seed=7)
    second = random_colourings(10, 4, seed=7)
    for _ in range(3):
        a, b = next(first), next(second)
        assert np.array_equal(a, b)
        assert a.min() >= 0 and a.max() < 4


# ==================== TILE PACKING ====================

@pytest.mark.parametrize("degree, side", [(0, 0), (1, 1), (3, 1), (7, 1), (8, 2), (15, 2), (16, 4), (40, 8)])
def test_tile_side(degree, side):
    assert _tile_side(degree) == side


def test_tiles_are_disjoint():
    degrees = [8, 8, 5, 3, 0, 8, 2, 1, 4, 12]
    packing = pack_tiles(degrees)
    assert packing.k == 8
    grid = np.zeros((packing.k, packing.k), dtype=int)
    for y in range(len(degrees)):
        for a in packing.A(y):
            for b in packing.B(y):
                grid[a, b] += 1
    assert grid.max() <= 1
    assert grid.sum() == sum(_tile_side(d) ** 2 for d in degrees)


def test_tile_parts_are_small():
    packing = pack_tiles([15, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0])
    parts = packing.parts(0, np.arange(1, 16))
    assert len(parts) == 2
    assert max(len(p) for p in parts) <= 8
    assert np.array_equal(np.concatenate(parts), np.arange(1, 16))


def test_oversized_packing_rejected():
    with pytest.raises(TilePackingError):
        pack_tiles([16, 0, 0])
    with pytest.raises(TilePackingError):
        pack_tiles([8] * 5)


# ==================== CONSTANT-ROUND 4-CYCLES ====================

def test_four_cycle_found_in_phase_two():
    result = detect_4cycle_constant(_cycle(4), CliqueNetwork(8))
    assert result.found
    assert not result.details["early_exit"]
    assert result.stats.rounds_total == PHASE2_ROUNDS


def test_dense_graph_stops_after_phase_one():
    result = detect_4cycle_constant(Graph.from_networkx(nx.complete_graph(8)), CliqueNetwork(8))
    assert result.found
    assert result.details["early_exit"]
    assert result.stats.rounds_total == 2


@pytest.mark.parametrize("graph", [nx.star_graph(7), nx.petersen_graph(), nx.cycle_graph(7), nx.empty_graph(5)])
def test_four_cycle_free_graphs(graph):
    G = Graph.from_networkx(graph)
    result = detect_4cycle_constant(G, CliqueNetwork(16))
    assert not result.found
    assert result.stats.rounds_total == PHASE2_ROUNDS


@pytest.mark.parametrize("seed", range(6))
def test_four_cycle_detection_matches_enumeration(seed):
    G = Graph.from_networkx(nx.gnp_random_graph(14, 0.2, seed=seed))
    result = detect_4cycle_constant(G, CliqueNetwork(16))
    assert result.found == (count_kcycles_brute(G, 4) > 0)


def test_walk_counts_reported():
    result = detect_4cycle_constant(Graph.from_networkx(nx.star_graph(7)), CliqueNetwork(8))
    assert list(result.details["walk_counts"]) == [7] + [7] * 7
    assert result.details["packing"] is not None


def test_four_cycle_detector_rejects_digraphs():
    G = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)], directed=True)
    with pytest.raises(ValueError):
        detect_4cycle_constant(G, CliqueNetwork(8))


@pytest.mark.parametrize("chord", [False, True])
def test_four_cycle_rounds_do_not_grow_with_n(chord):
    rounds = set()
    for n in (16, 32, 64):
        graph = nx.cycle_graph(n)
        if chord:
            graph.add_edge(0, 3)
        result = detect_4cycle_constant(Graph.from_networkx(graph), CliqueNetwork(n))
        assert result.found == chord
        rounds.add(result.stats.rounds_total)
    assert rounds == {PHASE2_ROUNDS}


@pytest.mark.parametrize("n", [16, 32, 64])
def test_four_cycle_detection_on_sparse_random_graphs(n):
    for seed in range(3):
        graph = nx.gnp_random_graph(n, 1.5 / n, seed=seed)
        A = nx.to_numpy_array(graph, dtype=np.int64)
        common = A @ A
        np.fill_diagonal(common, 0)
        result = detect_4cycle_constant(Graph.from_networkx(graph), CliqueNetwork(n))
        assert result.found == bool((common >= 2).any())


def _packable_degrees(rng):
    n = int(rng.integers(8, 65))
    degrees = rng.integers(0, n, size=n)
    while (degrees ** 2).sum() >= n * (2 * n - 1):
        degrees[degrees.argmax()] //= 2
    return degrees


@pytest.mark.parametrize("seed", range(10))
def test_tile_packing_on_random_degrees(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        degrees = _packable_degrees(rng)
        n = degrees.size
        packing = pack_tiles(degrees)
        assert packing.k <= n < 2 * packing.k

        grid = np.zeros((packing.k, packing.k), dtype=int)
        load = np.zeros(packing.k, dtype=np.int64)
        for y, degree in enumerate(degrees.tolist()):
            side = int(packing.side[y])
            assert 8 * side >= degree
            if side == 0:
                continue
            grid[packing.row_start[y]:packing.row_start[y] + side,
                 packing.col_start[y]:packing.col_start[y] + side] += 1
            parts = packing.parts(y, np.arange(degree))
            assert len(parts) == side
            assert max(len(p) for p in parts) <= 8
            for b in packing.B(y):
                load[b] += degree * len(parts[b - packing.col_start[y]])
        assert grid.max() <= 1
        assert load.max() <= 64 * n


@pytest.mark.slow
@pytest.mark.parametrize("k", [3, 4, 5])
def test_kcycle_detection_rate(k):
    n = 8
    found = 0
    for seed in range(20):
        rng = np.random.default_rng([seed, k])
        graph = nx.gnp_random_graph(n, 0.15, seed=seed)
        nodes = rng.permutation(n)[:k].tolist()
        nx.add_cycle(graph, nodes)
        G = Graph.from_networkx(graph)
        result = detect_kcycle(G, k, CliqueNetwork(n), seed=seed)
        if result.found:
            assert count_kcycles_brute(G, k) > 0
            found += 1
    assert found >= 19


@pytest.mark.parametrize("n, product", [(7, "mm_bilinear"), (8, "mm_semiring")])
def test_triangle_count_backend_follows_clique_size(k4, n, product):
    result = count_triangles(k4, CliqueNetwork(n))
    assert result.count == 4
    assert result.stats.rounds_under(f"count_triangles/{product}") > 0
