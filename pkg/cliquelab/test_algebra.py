#!/usr/bin/env python3
"""
Tests for semirings, semiring matrices and the polynomial embedding
"""

import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

# Add package directory to path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir))

from algebra import (
    BOOLEAN, INF, INTEGERS, MINPLUS, DimensionMismatchError, EmbeddingRangeError,
    IntRing, SemiringMatrix, SemiringMismatchError, TruncPolyRing, boolean_to_integers,
    check_compatible, integers_to_boolean, minplus_matrix, parse_minplus_entry,
    poly_embed, poly_extract, trace,
)
from oracle import mat_mul_oracle


def _random_minplus(n, M, rng, density=0.7):
    values = rng.integers(0, M + 1, size=(n, n)).astype(object)
    values[rng.random((n, n)) >= density] = INF
    return SemiringMatrix(MINPLUS, values)


def test_semiring_identities():
    assert BOOLEAN.zero is False and BOOLEAN.one is True
    assert MINPLUS.zero == INF and MINPLUS.one == 0
    assert MINPLUS.times(3, INF) == INF
    assert MINPLUS.plus(3, -2) == -2
    assert INTEGERS.times(-3, 4) == -12


@pytest.mark.parametrize("text, expected", [("inf", INF), ("∞", INF), (" 7 ", 7), ("-3", -3), (5.0, 5)])
def test_parse_minplus_entry(text, expected):
    assert parse_minplus_entry(text) == expected


@pytest.mark.parametrize("bad", ["-inf", float("nan"), 2.5, True])
def test_parse_minplus_entry_rejects(bad):
    with pytest.raises(ValueError):
        parse_minplus_entry(bad)


def test_matrix_is_square_and_read_only():
    with pytest.raises(DimensionMismatchError):
        SemiringMatrix(INTEGERS, [[1, 2, 3], [4, 5, 6]])
    S = SemiringMatrix(INTEGERS, [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        S.entries[0, 0] = 9


def test_boolean_entries_validated():
    with pytest.raises(ValueError):
        SemiringMatrix(BOOLEAN, [[0, 2], [1, 0]])
    assert SemiringMatrix(BOOLEAN, [[0, 1], [1, 0]])[0, 1]


def test_mixed_semirings_rejected():
    with pytest.raises(SemiringMismatchError):
        check_compatible(SemiringMatrix.identity(2, MINPLUS), SemiringMatrix.identity(2, INTEGERS))
    with pytest.raises(DimensionMismatchError):
        check_compatible(SemiringMatrix.identity(2, MINPLUS), SemiringMatrix.identity(3, MINPLUS))


def test_minplus_identity_is_neutral():
    rng = np.random.default_rng(3)
    S = _random_minplus(6, 9, rng)
    I = SemiringMatrix.identity(6, MINPLUS)
    assert mat_mul_oracle(I, S) == S
    assert mat_mul_oracle(S, I) == S


def test_minplus_witness_prefers_smallest_index():
    S = minplus_matrix([[0, 1, 2], [INF, 0, INF], [INF, INF, 0]])
    T = minplus_matrix([[2, INF, INF], [1, INF, INF], [0, INF, INF]])
    product, witness = MINPLUS.matmul_with_witness(S.entries, T.entries)
    # row 0: 0+2, 1+1 and 2+0 all give 2
    assert product[0, 0] == 2
    assert witness[0, 0] == 0
    assert witness[0, 1] == -1
    assert product[0, 1] == INF


def test_integer_products_stay_exact():
    big = 2 ** 40
    S = SemiringMatrix(INTEGERS, [[big, big], [big, big]])
    P = mat_mul_oracle(S, S)
    assert P[0, 0] == 2 * big * big


def test_boolean_integer_round_trip():
    S = SemiringMatrix(BOOLEAN, [[1, 1, 0], [0, 1, 1], [1, 0, 0]])
    P = mat_mul_oracle(boolean_to_integers(S), boolean_to_integers(S))
    assert integers_to_boolean(P) == mat_mul_oracle(S, S)


def test_tolist_writes_inf():
    S = minplus_matrix([[0, INF], [3, 0]])
    assert S.tolist() == [[0, "inf"], [3, 0]]


def test_truncated_polynomial_width():
    for M in range(5):
        ring = TruncPolyRing(M)
        assert ring.words_per_element == 2 * M + 1
        assert ring.element_shape == (2 * M + 1,)
    assert IntRing(word_count=3).words_per_element == 3
    with pytest.raises(ValueError):
        TruncPolyRing(-1)


def test_truncated_polynomial_product_matches_convolution():
    ring = TruncPolyRing(2)
    a = np.array([1, 2, 0, 0, 1])
    b = np.array([0, 1, 3, 0, 0])
    A = a.reshape(1, 1, 5)
    B = b.reshape(1, 1, 5)
    assert list(ring.matmul(A, B)[0, 0]) == list(np.convolve(a, b)[:5])


def test_truncated_polynomial_promotes_near_overflow():
    ring = TruncPolyRing(1)
    A = ring.zeros((2, 2))
    A[:, :, 0] = 2 ** 40
    product = ring.matmul(A, A)
    assert product[0, 0, 0] == 2 * 2 ** 80


def test_embedding_exhaustive_small():
    domain = [0, 1, INF]
    for s in itertools.product(domain, repeat=4):
        S = minplus_matrix(np.array(s, dtype=object).reshape(2, 2))
        for t in itertools.product(domain, repeat=4):
            T = minplus_matrix(np.array(t, dtype=object).reshape(2, 2))
            P = poly_extract(mat_mul_oracle(poly_embed(S, 1), poly_embed(T, 1)))
            assert P == mat_mul_oracle(S, T)


@pytest.mark.parametrize("seed", range(20))
def test_embedding_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    M = int(rng.integers(0, 9))
    S, T = _random_minplus(n, M, rng), _random_minplus(n, M, rng)
    P = poly_extract(mat_mul_oracle(poly_embed(S, M), poly_embed(T, M)))
    assert P == mat_mul_oracle(S, T)


def test_embedding_range_checked():
    with pytest.raises(EmbeddingRangeError) as excinfo:
        poly_embed(minplus_matrix([[0, 5], [INF, 0]]), 4)
    assert excinfo.value.position == (0, 1)
    with pytest.raises(EmbeddingRangeError):
        poly_embed(minplus_matrix([[0, -1], [INF, 0]]), 4)


def test_embedding_zero_bound_is_reachability():
    S = minplus_matrix([[0, 0, INF], [INF, 0, 0], [INF, INF, 0]])
    P = poly_extract(mat_mul_oracle(poly_embed(S, 0), poly_embed(S, 0)))
    assert P.tolist() == [[0, 0, 0], ["inf", 0, 0], ["inf", "inf", 0]]


# ==================== TRACE ====================

def test_trace_of_identity_and_zero():
    assert trace(SemiringMatrix.identity(4, INTEGERS)) == 4
    assert trace(SemiringMatrix.zeros(4, INTEGERS)) == 0
    assert trace(SemiringMatrix.identity(3, BOOLEAN))
    assert not trace(SemiringMatrix.zeros(3, BOOLEAN))


def test_trace_counts_closed_walks():
    # every node of K3 closes two 3-walks
    A = SemiringMatrix(INTEGERS, [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    assert trace(mat_mul_oracle(mat_mul_oracle(A, A), A)) == 6


def test_trace_in_other_semirings():
    assert trace(minplus_matrix([[3, 0], [INF, 5]])) == 3
    assert trace(minplus_matrix([[INF, 0], [1, INF]])) == INF
    assert list(trace(SemiringMatrix.identity(2, TruncPolyRing(1)))) == [2, 0, 0]


# ==================== SEMIRING LAWS ====================

def _law_operands(kind, rng, n=5):
    if kind == "boolean":
        return [SemiringMatrix(BOOLEAN, rng.random((n, n)) < 0.4) for _ in range(3)]
    if kind == "integers":
        return [SemiringMatrix(INTEGERS, rng.integers(-6, 7, size=(n, n))) for _ in range(3)]
    if kind == "minplus":
        return [_random_minplus(n, 9, rng, density=0.6) for _ in range(3)]
    return [poly_embed(_random_minplus(n, 2, rng), 2) for _ in range(3)]


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("kind", ["boolean", "integers", "minplus", "polynomials"])
def test_semiring_laws(kind, seed):
    S, T, U = _law_operands(kind, np.random.default_rng(seed))
    sr, n = S.semiring, S.n
    zero, one = SemiringMatrix.zeros(n, sr), SemiringMatrix.identity(n, sr)
    mul = mat_mul_oracle

    assert mul(mul(S, T), U) == mul(S, mul(T, U))
    assert mul(S, T.plus(U)) == mul(S, T).plus(mul(S, U))
    assert mul(S.plus(T), U) == mul(S, U).plus(mul(T, U))
    assert S.plus(T) == T.plus(S)
    assert S.plus(T).plus(U) == S.plus(T.plus(U))
    assert S.plus(zero) == S
    assert mul(S, one) == S == mul(one, S)
    assert mul(S, zero) == zero == mul(zero, S)
