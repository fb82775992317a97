#!/usr/bin/env python3
"""
Tests for the distributed matrix products and backend selection
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add package directory to path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir))

from algebra import (
    BOOLEAN, INF, INTEGERS, MINPLUS, SemiringMatrix, SemiringMismatchError,
    poly_embed, poly_extract,
)
from matmul import (
    BilinearAlgorithm, BilinearAlgorithmError, MatmulBackend, NodeCountError,
    clique_size_for, mm_bilinear, mm_boolean, mm_semiring, nearest_valid_counts,
    power_exponent, resolve_backend, strassen,
)
from network import CliqueNetwork
from oracle import mat_mul_oracle
from witness import verify_witnesses


def _random_matrix(semiring, n, rng):
    if semiring is MINPLUS:
        values = rng.integers(0, 20, size=(n, n)).astype(object)
        values[rng.random((n, n)) < 0.3] = INF
        return SemiringMatrix(MINPLUS, values)
    if semiring is BOOLEAN:
        return SemiringMatrix(BOOLEAN, rng.random((n, n)) < 0.4)
    return SemiringMatrix(INTEGERS, rng.integers(-9, 10, size=(n, n)))


# ==================== 3D SEMIRING ====================

@pytest.mark.parametrize("semiring", [MINPLUS, INTEGERS, BOOLEAN])
@pytest.mark.parametrize("n", [8, 27])
def test_semiring_product_matches_oracle(semiring, n):
    rng = np.random.default_rng(n)
    S, T = _random_matrix(semiring, n, rng), _random_matrix(semiring, n, rng)
    net = CliqueNetwork(n, seed=1)
    result = mm_semiring(S, T, net)
    assert result.product == mat_mul_oracle(S, T)
    assert result.witnesses is None
    assert result.stats.rounds_under("mm_semiring") == result.stats.rounds_total


def test_semiring_product_pads_small_matrices():
    rng = np.random.default_rng(4)
    S, T = _random_matrix(MINPLUS, 5, rng), _random_matrix(MINPLUS, 5, rng)
    result = mm_semiring(S, T, CliqueNetwork(8))
    assert result.product.n == 5
    assert result.product == mat_mul_oracle(S, T)


def test_semiring_step_loads():
    # step 1: every node ships n^(2/3) pieces of n^(2/3) words for each operand
    net = CliqueNetwork(8, keep_ledger=True)
    rng = np.random.default_rng(2)
    mm_semiring(_random_matrix(INTEGERS, 8, rng), _random_matrix(INTEGERS, 8, rng), net)
    stats = net.stats()
    assert stats.phase("mm_semiring/step1").offered_out == 2 * 2 ** 4
    assert stats.phase("mm_semiring/step3").offered_out == 2 ** 2 * 2 ** 2
    pattern = net.ledger_pattern()
    assert np.unique(pattern, axis=0).shape[0] == pattern.shape[0]


def test_semiring_witnesses_are_valid():
    rng = np.random.default_rng(9)
    S, T = _random_matrix(MINPLUS, 27, rng), _random_matrix(MINPLUS, 27, rng)
    result = mm_semiring(S, T, CliqueNetwork(27), with_witness=True)
    assert verify_witnesses(S, T, result.product, result.witnesses) == set()
    assert np.all(result.witnesses[np.asarray(result.product.entries == INF, dtype=bool)] == -1)


def test_witnesses_only_for_minplus():
    S = SemiringMatrix.identity(8, INTEGERS)
    with pytest.raises(SemiringMismatchError):
        mm_semiring(S, S, CliqueNetwork(8), with_witness=True)


def test_semiring_needs_a_cube():
    S = SemiringMatrix.identity(10, MINPLUS)
    with pytest.raises(NodeCountError) as excinfo:
        mm_semiring(S, S, CliqueNetwork(10))
    assert excinfo.value.nearest == (8, 27)


# ==================== BILINEAR ====================

def test_strassen_tensor():
    alg = strassen(1)
    assert (alg.d, alg.m) == (2, 7)
    assert alg.omega == pytest.approx(math.log2(7))
    assert strassen(2).m == 49
    assert strassen(0).m == 1


def test_broken_tensor_rejected():
    alg = strassen(1)
    alpha = alg.dense("alpha")
    alpha[0, 0, 0] = 0
    with pytest.raises(BilinearAlgorithmError):
        BilinearAlgorithm.from_dense(alpha, alg.dense("beta"), alg.dense("lambda"))


@pytest.mark.parametrize("n, levels", [(7, 1), (49, 2)])
def test_bilinear_product_matches_oracle(n, levels):
    rng = np.random.default_rng(levels)
    S, T = _random_matrix(INTEGERS, n, rng), _random_matrix(INTEGERS, n, rng)
    result = mm_bilinear(S, T, CliqueNetwork(n), strassen(levels))
    assert result.product == mat_mul_oracle(S, T)
    assert result.stats.rounds_under("mm_bilinear") == result.stats.rounds_total


def test_bilinear_pads_small_matrices():
    rng = np.random.default_rng(5)
    S, T = _random_matrix(INTEGERS, 4, rng), _random_matrix(INTEGERS, 4, rng)
    assert mm_bilinear(S, T, CliqueNetwork(7), strassen(1)).product == mat_mul_oracle(S, T)


def test_bilinear_over_polynomials():
    rng = np.random.default_rng(6)
    M = 3
    values = rng.integers(0, M + 1, size=(7, 7)).astype(object)
    values[rng.random((7, 7)) < 0.3] = INF
    S = SemiringMatrix(MINPLUS, values)
    P = mm_bilinear(poly_embed(S, M), poly_embed(S, M), CliqueNetwork(7), strassen(1)).product
    assert poly_extract(P) == mat_mul_oracle(S, S)


def test_bilinear_needs_a_ring():
    S = SemiringMatrix.identity(7, MINPLUS)
    with pytest.raises(SemiringMismatchError):
        mm_bilinear(S, S, CliqueNetwork(7), strassen(1))


def test_bilinear_needs_matching_clique():
    S = SemiringMatrix.identity(8, INTEGERS)
    with pytest.raises(NodeCountError):
        mm_bilinear(S, S, CliqueNetwork(8), strassen(1))


def test_boolean_through_integers():
    rng = np.random.default_rng(8)
    S, T = _random_matrix(BOOLEAN, 7, rng), _random_matrix(BOOLEAN, 7, rng)
    result = mm_boolean(S, T, CliqueNetwork(7))
    assert result.product.semiring == BOOLEAN
    assert result.product == mat_mul_oracle(S, T)


def test_boolean_needs_power_of_seven():
    S = SemiringMatrix.identity(8, BOOLEAN)
    with pytest.raises(NodeCountError):
        mm_boolean(S, S, CliqueNetwork(8))


# ==================== BACKENDS ====================

def test_backend_parse():
    assert MatmulBackend.parse("semiring3d") == MatmulBackend("semiring3d")
    assert MatmulBackend.parse("Bilinear:2") == MatmulBackend("bilinear", 2)
    assert MatmulBackend.parse("bilinear") == MatmulBackend("bilinear", 1)
    assert MatmulBackend.parse("auto") is None
    assert MatmulBackend("bilinear", 2).label == "bilinear:2"
    with pytest.raises(ValueError):
        MatmulBackend.parse("cannon")
    with pytest.raises(ValueError):
        MatmulBackend("bilinear", 0)


def test_resolve_backend():
    assert resolve_backend(None, CliqueNetwork(49)) == MatmulBackend("bilinear", 2)
    assert resolve_backend(None, CliqueNetwork(27)) == MatmulBackend("semiring3d")
    explicit = MatmulBackend("semiring3d")
    assert resolve_backend(explicit, CliqueNetwork(7)) is explicit
    with pytest.raises(NodeCountError):
        resolve_backend(None, CliqueNetwork(10))


def test_clique_sizes():
    assert clique_size_for(5) == 8
    assert clique_size_for(27) == 27
    assert MatmulBackend("bilinear", 1).clique_size_for(5) == 7
    with pytest.raises(NodeCountError):
        MatmulBackend("bilinear", 1).clique_size_for(10)


def test_backend_multiply_dispatch():
    rng = np.random.default_rng(12)
    S, T = _random_matrix(BOOLEAN, 7, rng), _random_matrix(BOOLEAN, 7, rng)
    backend = MatmulBackend("bilinear", 1)
    assert backend.multiply(S, T, CliqueNetwork(7)).product == mat_mul_oracle(S, T)
    with pytest.raises(SemiringMismatchError):
        backend.multiply(S, T, CliqueNetwork(7), with_witness=True)


def test_node_count_helpers():
    assert power_exponent(343, 7) == 3
    assert power_exponent(50, 7) is None
    assert power_exponent(0, 7) is None
    assert nearest_valid_counts(50, "bilinear") == (49, 343)
    assert nearest_valid_counts(64, "semiring3d") == (None, 64)
    assert nearest_valid_counts(3, "bilinear", levels=2) == (None, 49)


@pytest.mark.slow
def test_semiring_product_on_512_nodes():
    rng = np.random.default_rng(512)
    S, T = _random_matrix(INTEGERS, 512, rng), _random_matrix(INTEGERS, 512, rng)
    assert mm_semiring(S, T, CliqueNetwork(512)).product == mat_mul_oracle(S, T)


@pytest.mark.parametrize("semiring", [MINPLUS, BOOLEAN, INTEGERS])
@pytest.mark.parametrize("n", [8, 27])
def test_semiring_schedule_ignores_entries(semiring, n):
    patterns = []
    for trial in range(10):
        rng = np.random.default_rng([trial, n])
        S, T = _random_matrix(semiring, n, rng), _random_matrix(semiring, n, rng)
        net = CliqueNetwork(n, seed=1, keep_ledger=True)
        mm_semiring(S, T, net)
        patterns.append(net.ledger_pattern())
    for pattern in patterns[1:]:
        assert np.array_equal(pattern, patterns[0])


@pytest.mark.slow
def test_semiring_rounds_grow_with_cube_root():
    rounds = {}
    for n in (64, 512):
        rng = np.random.default_rng(n)
        S, T = _random_matrix(INTEGERS, n, rng), _random_matrix(INTEGERS, n, rng)
        net = CliqueNetwork(n, seed=1)
        mm_semiring(S, T, net)
        q = round(n ** (1 / 3))
        assert net.stats().phase("mm_semiring/step1").offered_out == 2 * q ** 4
        rounds[n] = net.round_counter
    # n^(1/3) doubles from 64 to 512
    assert 1.5 <= rounds[512] / rounds[64] <= 2.7
