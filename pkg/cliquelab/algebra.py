"""
Semiring Algebra

This module defines the algebraic carriers used by every clique computation:
the Boolean semiring, the min-plus semiring, the ring of integers, and the ring of
polynomials truncated at degree 2M that carries bounded distance products.

Each semiring knows how to coerce raw input into a numpy array, how wide one of
its elements is on the wire, and how to add and multiply whole blocks locally.
Matrices are immutable `SemiringMatrix` values.
"""

import math
import numbers
from dataclasses import dataclass
from typing import Any, Iterable, Tuple

import numpy as np


INF = math.inf

_INT64_HEADROOM = 2 ** 62


# ==================== ERRORS ====================

class DimensionMismatchError(ValueError):
    """Matrices (or blocks) whose shapes cannot be combined"""


class SemiringMismatchError(ValueError):
    """Operands that live in different semirings"""


class EmbeddingRangeError(ValueError):
    """A min-plus entry outside {0..M} ∪ {∞} handed to the polynomial embedding"""

    def __init__(self, value: Any, position: Tuple[int, int], bound: int):
        super().__init__(
            f"entry {value!r} at {position} is outside {{0..{bound}}} ∪ {{inf}}"
        )
        self.value = value
        self.position = position
        self.bound = bound


# ==================== SCALAR HELPERS ====================

def is_inf(value: Any) -> bool:
    return isinstance(value, float) and value == INF


def _as_int(value: Any, context: str) -> int:
    if isinstance(value, (bool, np.bool_)):
        raise ValueError(f"{context}: booleans are not integers ({value!r})")
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real) and float(value).is_integer():
        return int(value)
    raise ValueError(f"{context}: {value!r} is not an integer")


def parse_minplus_entry(value: Any) -> Any:
    """Normalize one min-plus entry to a Python int or INF."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity", "∞"):
            return INF
        return _as_int(int(text), "min-plus entry")
    if isinstance(value, numbers.Real) and not isinstance(value, (bool, np.bool_)):
        if math.isnan(value):
            raise ValueError("min-plus entry: NaN is not allowed")
        if math.isinf(value):
            if value < 0:
                raise ValueError("min-plus entry: -inf is not an element of the semiring")
            return INF
    return _as_int(value, "min-plus entry")


def _object_array(values: Any) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    return arr.copy()


# ==================== SEMIRINGS ====================

class SemiringSpec:
    """
    A commutative semiring with block kernels.

    Subclasses are frozen dataclasses, so two specs compare equal exactly when
    they describe the same carrier.
    """

    name = "semiring"
    is_ring = False

    @property
    def element_shape(self) -> Tuple[int, ...]:
        return ()

    @property
    def words_per_element(self) -> int:
        return 1

    @property
    def zero(self) -> Any:
        raise NotImplementedError

    @property
    def one(self) -> Any:
        raise NotImplementedError

    # scalar operations

    def plus(self, a: Any, b: Any) -> Any:
        raise NotImplementedError

    def times(self, a: Any, b: Any) -> Any:
        raise NotImplementedError

    def equal(self, a: Any, b: Any) -> bool:
        return bool(np.all(np.asarray(a) == np.asarray(b)))

    # block operations

    def coerce(self, values: Any) -> np.ndarray:
        raise NotImplementedError

    def zeros(self, shape: Tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError

    def identity(self, n: int) -> np.ndarray:
        out = self.zeros((n, n))
        for i in range(n):
            out[i, i] = self.one
        return out

    def add(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matmul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_zero(self, A: np.ndarray) -> np.ndarray:
        """Boolean mask over the leading two axes: entry equals the additive zero."""
        raise NotImplementedError

    def _check_inner(self, A: np.ndarray, B: np.ndarray):
        if A.shape[1] != B.shape[0]:
            raise DimensionMismatchError(
                f"cannot multiply {A.shape[:2]} by {B.shape[:2]} blocks"
            )


@dataclass(frozen=True)
class BooleanSR(SemiringSpec):
    """({0,1}, OR, AND)"""

    name = "boolean"

    @property
    def zero(self) -> bool:
        return False

    @property
    def one(self) -> bool:
        return True

    def plus(self, a, b):
        return bool(a) or bool(b)

    def times(self, a, b):
        return bool(a) and bool(b)

    def coerce(self, values: Any) -> np.ndarray:
        arr = np.asarray(values)
        if arr.dtype == np.bool_:
            return arr.copy()
        if arr.dtype == object:
            arr = np.array(
                [int(v) if isinstance(v, (bool, np.bool_)) else _as_int(v, "boolean entry")
                 for v in arr.ravel()],
                dtype=np.int64,
            ).reshape(arr.shape)
        if not np.issubdtype(arr.dtype, np.integer) or not np.isin(arr, (0, 1)).all():
            raise ValueError("boolean entries must be 0/1 or True/False")
        return arr.astype(np.bool_)

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.bool_)

    def add(self, A, B):
        return np.logical_or(A, B)

    def matmul(self, A, B):
        self._check_inner(A, B)
        return (A.astype(np.int64) @ B.astype(np.int64)) > 0

    def is_zero(self, A):
        return ~A


@dataclass(frozen=True)
class MinPlusSR(SemiringSpec):
    """(Z ∪ {∞}, min, +) with ∞ absorbing for + (saturating addition)"""

    name = "min-plus"

    @property
    def zero(self):
        return INF

    @property
    def one(self):
        return 0

    def plus(self, a, b):
        return min(a, b)

    def times(self, a, b):
        if is_inf(a) or is_inf(b):
            return INF
        return a + b

    def equal(self, a, b):
        return a == b

    def coerce(self, values):
        arr = _object_array(values)
        flat = arr.ravel()
        for i, v in enumerate(flat):
            flat[i] = parse_minplus_entry(v)
        return flat.reshape(arr.shape)

    def zeros(self, shape):
        out = np.empty(shape, dtype=object)
        out.fill(INF)
        return out

    def add(self, A, B):
        return np.minimum(A, B).astype(object)

    def matmul(self, A, B):
        return self.matmul_with_witness(A, B)[0]

    def matmul_with_witness(self, A: np.ndarray, B: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Distance product of two blocks plus the smallest inner index attaining each
        minimum (-1 where the product is ∞).
        """
        self._check_inner(A, B)
        p, k = A.shape
        q = B.shape[1]
        if k == 0:
            return self.zeros((p, q)), np.full((p, q), -1, dtype=np.int64)
        sums = A[:, :, None] + B[None, :, :]
        witness = np.argmin(sums, axis=1).astype(np.int64)
        product = np.take_along_axis(sums, witness[:, None, :], axis=1)[:, 0, :]
        product = np.asarray(product, dtype=object)
        witness[self.is_zero(product)] = -1
        return product, witness

    def is_zero(self, A):
        return np.equal(A, INF).astype(np.bool_)


class _IntegerCoefficientRing(SemiringSpec):
    """Rings whose addition is integer addition and whose scalars are integers."""

    is_ring = True

    def scale(self, coefficient: int, A: np.ndarray) -> np.ndarray:
        return A * coefficient

    def negate(self, A: np.ndarray) -> np.ndarray:
        return -A

    def linear_combination(self, coefficients: np.ndarray, stacked: np.ndarray) -> np.ndarray:
        """
        Integer combinations of stacked blocks.

        coefficients has shape (m, r), stacked has shape (r, ...); the result has
        shape (m, ...) with out[w] = Σ_t coefficients[w, t] · stacked[t].
        """
        if coefficients.shape[1] != stacked.shape[0]:
            raise DimensionMismatchError("coefficient count does not match block count")
        if stacked.dtype == object:
            coefficients = coefficients.astype(object)
        else:
            bound = int(np.abs(coefficients).sum(axis=1).max(initial=0)) * _max_abs(stacked)
            if bound >= _INT64_HEADROOM:
                coefficients = coefficients.astype(object)
                stacked = stacked.astype(object)
        return np.tensordot(coefficients, stacked, axes=([1], [0]))


def _max_abs(A: np.ndarray) -> int:
    if A.size == 0:
        return 0
    return int(np.max(np.abs(A)))


@dataclass(frozen=True)
class IntRing(_IntegerCoefficientRing):
    """(Z, +, ×) with exact integers; word_count is the wire width of one entry"""

    word_count: int = 1
    name = "integers"

    def __post_init__(self):
        if self.word_count < 1:
            raise ValueError("word_count must be at least 1")

    @property
    def words_per_element(self) -> int:
        return self.word_count

    @property
    def zero(self):
        return 0

    @property
    def one(self):
        return 1

    def plus(self, a, b):
        return a + b

    def times(self, a, b):
        return a * b

    def equal(self, a, b):
        return a == b

    def coerce(self, values):
        arr = _object_array(values)
        flat = arr.ravel()
        for i, v in enumerate(flat):
            flat[i] = _as_int(v, "integer entry")
        return flat.reshape(arr.shape)

    def zeros(self, shape):
        out = np.empty(shape, dtype=object)
        out.fill(0)
        return out

    def add(self, A, B):
        return (A + B).astype(object)

    def matmul(self, A, B):
        self._check_inner(A, B)
        if A.shape[1] == 0:
            return self.zeros((A.shape[0], B.shape[1]))
        return np.dot(A.astype(object), B.astype(object))

    def is_zero(self, A):
        return np.equal(A, 0).astype(np.bool_)


@dataclass(frozen=True)
class TruncPolyRing(_IntegerCoefficientRing):
    """
    Z[X] / (X^(2M+1)): integer polynomials truncated above degree 2M.

    An element is a coefficient vector of length 2M+1; a matrix has shape
    (n, n, 2M+1). Coefficients are int64 and move to exact Python integers when a
    product could leave the int64 range.
    """

    M: int = 0
    coefficient_words: int = 1
    name = "truncated-polynomials"

    def __post_init__(self):
        if self.M < 0:
            raise ValueError(f"degree bound M must be non-negative, got {self.M}")
        if self.coefficient_words < 1:
            raise ValueError("coefficient_words must be at least 1")

    @property
    def length(self) -> int:
        return 2 * self.M + 1

    @property
    def element_shape(self):
        return (self.length,)

    @property
    def words_per_element(self) -> int:
        return self.length * self.coefficient_words

    @property
    def zero(self):
        return np.zeros(self.length, dtype=np.int64)

    @property
    def one(self):
        e = np.zeros(self.length, dtype=np.int64)
        e[0] = 1
        return e

    def monomial(self, degree: int) -> np.ndarray:
        e = np.zeros(self.length, dtype=np.int64)
        e[degree] = 1
        return e

    def plus(self, a, b):
        return np.asarray(a) + np.asarray(b)

    def times(self, a, b):
        return np.convolve(np.asarray(a), np.asarray(b))[: self.length]

    def coerce(self, values):
        arr = np.asarray(values)
        if arr.shape[-1:] != (self.length,):
            raise DimensionMismatchError(
                f"polynomial entries need {self.length} coefficients, got shape {arr.shape}"
            )
        if arr.dtype == object:
            flat = arr.ravel().copy()
            for i, v in enumerate(flat):
                flat[i] = _as_int(v, "coefficient")
            arr = flat.reshape(arr.shape)
            if _max_abs(arr) < _INT64_HEADROOM:
                arr = arr.astype(np.int64)
            return arr
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("polynomial coefficients must be integers")
        return arr.astype(np.int64)

    def zeros(self, shape):
        return np.zeros(tuple(shape) + (self.length,), dtype=np.int64)

    def identity(self, n):
        out = self.zeros((n, n))
        out[np.arange(n), np.arange(n), 0] = 1
        return out

    def add(self, A, B):
        if A.dtype == object or B.dtype == object:
            return A.astype(object) + B.astype(object)
        if _max_abs(A) + _max_abs(B) >= _INT64_HEADROOM:
            return A.astype(object) + B.astype(object)
        return A + B

    def matmul(self, A, B):
        self._check_inner(A, B)
        p, k = A.shape[:2]
        q = B.shape[1]
        D = self.length
        exact = A.dtype == object or B.dtype == object
        if not exact and _max_abs(A) * _max_abs(B) * max(k, 1) * D >= _INT64_HEADROOM:
            exact = True
        if exact:
            A = A.astype(object)
            B = B.astype(object)
            out = np.empty((p, q, D), dtype=object)
            out.fill(0)
        else:
            out = np.zeros((p, q, D), dtype=np.int64)
        if k == 0:
            return out
        for a in range(D):
            Aa = A[:, :, a]
            if not Aa.any():
                continue
            out[:, :, a:] += np.tensordot(Aa, B[:, :, : D - a], axes=([1], [0]))
        return out

    def is_zero(self, A):
        return ~np.asarray(A != 0).any(axis=-1)


BOOLEAN = BooleanSR()
MINPLUS = MinPlusSR()
INTEGERS = IntRing()


# ==================== MATRICES ====================

@dataclass(frozen=True, eq=False)
class SemiringMatrix:
    """An immutable n × n matrix over a semiring"""
    semiring: SemiringSpec
    entries: np.ndarray

    def __post_init__(self):
        arr = self.semiring.coerce(self.entries)
        _check_square(arr, self.semiring)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def wrap(cls, semiring: SemiringSpec, entries: np.ndarray) -> "SemiringMatrix":
        """Adopt an array produced by a semiring kernel without re-validating it."""
        _check_square(entries, semiring)
        obj = object.__new__(cls)
        entries.setflags(write=False)
        object.__setattr__(obj, "semiring", semiring)
        object.__setattr__(obj, "entries", entries)
        return obj

    @classmethod
    def zeros(cls, n: int, semiring: SemiringSpec) -> "SemiringMatrix":
        return cls.wrap(semiring, semiring.zeros((n, n)))

    @classmethod
    def identity(cls, n: int, semiring: SemiringSpec) -> "SemiringMatrix":
        return cls.wrap(semiring, semiring.identity(n))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, index):
        return self.entries[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemiringMatrix):
            return NotImplemented
        return (
            self.semiring == other.semiring
            and self.entries.shape == other.entries.shape
            and bool(np.all(self.entries == other.entries))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SemiringMatrix({self.semiring.name}, n={self.n})"

    def plus(self, other: "SemiringMatrix") -> "SemiringMatrix":
        check_compatible(self, other)
        return SemiringMatrix.wrap(self.semiring, self.semiring.add(self.entries, other.entries))

    def padded(self, n: int) -> np.ndarray:
        """Entries embedded in an n × n block of semiring zeros (a fresh array)."""
        if n < self.n:
            raise DimensionMismatchError(f"cannot pad a {self.n}x{self.n} matrix to {n}")
        out = self.semiring.zeros((n, n))
        out[: self.n, : self.n] = self.entries
        return out

    def tolist(self) -> list:
        """JSON-friendly nested lists ("inf" for ∞)."""
        if isinstance(self.semiring, TruncPolyRing):
            return [[[int(c) for c in entry] for entry in row] for row in self.entries]
        return [[_jsonable(v) for v in row] for row in self.entries]


def _jsonable(value: Any) -> Any:
    if is_inf(value):
        return "inf"
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    return int(value)


def _check_square(arr: np.ndarray, semiring: SemiringSpec):
    extra = len(semiring.element_shape)
    if arr.ndim != 2 + extra or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {arr.shape}")


def check_compatible(*matrices: SemiringMatrix):
    """All operands share one semiring and one dimension."""
    first = matrices[0]
    for other in matrices[1:]:
        if other.semiring != first.semiring:
            raise SemiringMismatchError(
                f"{first.semiring.name} matrix combined with {other.semiring.name} matrix"
            )
        if other.n != first.n:
            raise DimensionMismatchError(f"dimensions {first.n} and {other.n} differ")


def minplus_matrix(rows: Iterable[Iterable[Any]]) -> SemiringMatrix:
    return SemiringMatrix(MINPLUS, rows)


def trace(S: SemiringMatrix) -> Any:
    """Semiring sum of the diagonal entries."""
    total = S.semiring.zero
    for v in range(S.n):
        total = S.semiring.plus(total, S.entries[v, v])
    return total


def boolean_to_integers(S: SemiringMatrix) -> SemiringMatrix:
    if S.semiring != BOOLEAN:
        raise SemiringMismatchError("expected a boolean matrix")
    return SemiringMatrix.wrap(INTEGERS, S.entries.astype(np.int64).astype(object))


def integers_to_boolean(P: SemiringMatrix) -> SemiringMatrix:
    """Threshold an integer matrix: nonzero becomes 1."""
    return SemiringMatrix.wrap(BOOLEAN, ~INTEGERS.is_zero(P.entries))


# ==================== POLYNOMIAL EMBEDDING ====================

def poly_embed(S: SemiringMatrix, M: int) -> SemiringMatrix:
    """Map each finite entry s to X^s and ∞ to the zero polynomial."""
    if S.semiring != MINPLUS:
        raise SemiringMismatchError("the embedding takes a min-plus matrix")
    ring = TruncPolyRing(M)
    out = ring.zeros((S.n, S.n))
    for (u, v), value in np.ndenumerate(S.entries):
        if is_inf(value):
            continue
        if value < 0 or value > M:
            raise EmbeddingRangeError(value, (u, v), M)
        out[u, v, value] = 1
    return SemiringMatrix.wrap(ring, out)


def poly_extract(P: SemiringMatrix) -> SemiringMatrix:
    """Lowest degree with a nonzero coefficient; ∞ for the zero polynomial."""
    if not isinstance(P.semiring, TruncPolyRing):
        raise SemiringMismatchError("extraction takes a truncated-polynomial matrix")
    nonzero = np.asarray(P.entries != 0)
    present = nonzero.any(axis=-1)
    degree = nonzero.argmax(axis=-1)
    out = MINPLUS.zeros((P.n, P.n))
    for u, v in zip(*np.nonzero(present)):
        out[u, v] = int(degree[u, v])
    return SemiringMatrix.wrap(MINPLUS, out)
