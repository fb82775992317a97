"""
Witness Matrices

A witness for entry (u, v) of P = S ⊗ T is an index w with S_uw ⊗ T_wv = P_uv.
Witnesses are recovered from any product routine passed in as a callable:

- `witness_unique` reads one bit of the witness per masked product and so finds
  every witness that is unique for its pair;
- `witness_general` samples index subsets of growing size, which isolates a single
  witness with constant probability, and reruns the unique procedure on them.

Every reported witness is checked against S, T and P; unchecked pairs stay
UNKNOWN. Works for min-plus and Boolean products.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Set, Tuple

import numpy as np

from algebra import SemiringMatrix, check_compatible
from config import load_settings
from network import CliqueNetwork

logger = logging.getLogger(__name__)

UNKNOWN = -1

Product = Callable[[SemiringMatrix, SemiringMatrix], SemiringMatrix]


@dataclass(frozen=True)
class WitnessSample:
    """One sampled index set V_j at a given level (2^level draws with replacement)"""
    level: int
    trial: int
    members: np.ndarray


@dataclass
class WitnessResult:
    Q: np.ndarray
    unknown: Set[Tuple[int, int]]
    product_calls: int
    samples: List[WitnessSample] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.unknown


def bit_count(n: int) -> int:
    """⌈log₂ n⌉: the number of bits in a node id"""
    return math.ceil(math.log2(n)) if n > 1 else 0


def mask(
    S: SemiringMatrix,
    rows: Optional[Iterable[int]] = None,
    cols: Optional[Iterable[int]] = None,
) -> SemiringMatrix:
    """S(U, W): rows outside U and columns outside W become the semiring zero."""
    n = S.n
    keep_rows = np.zeros(n, dtype=bool)
    keep_cols = np.zeros(n, dtype=bool)
    keep_rows[list(range(n)) if rows is None else list(rows)] = True
    keep_cols[list(range(n)) if cols is None else list(cols)] = True
    out = S.semiring.zeros((n, n))
    block = np.ix_(keep_rows, keep_cols)
    out[block] = S.entries[block]
    return SemiringMatrix.wrap(S.semiring, out)


def _needed(P: SemiringMatrix) -> np.ndarray:
    """Pairs that have witnesses at all: P_uv is not the semiring zero."""
    return ~np.asarray(P.semiring.is_zero(P.entries), dtype=bool)


def _is_witness(S: SemiringMatrix, T: SemiringMatrix, P: SemiringMatrix, u: int, w: int, v: int) -> bool:
    if not 0 <= w < S.n:
        return False
    sr = S.semiring
    return bool(sr.equal(sr.times(S[u, w], T[w, v]), P[u, v]))


def verify_witnesses(
    S: SemiringMatrix,
    T: SemiringMatrix,
    P: SemiringMatrix,
    Q: np.ndarray,
) -> Set[Tuple[int, int]]:
    """Pairs with a non-zero P_uv whose Q_uv is unknown or fails the witness equation."""
    check_compatible(S, T, P)
    if Q.shape != (P.n, P.n):
        raise ValueError(f"witness matrix has shape {Q.shape}, expected {(P.n, P.n)}")
    bad = set()
    for u, v in zip(*np.nonzero(_needed(P))):
        u, v = int(u), int(v)
        if not _is_witness(S, T, P, u, int(Q[u, v]), v):
            bad.add((u, v))
    return bad


def _unique_candidates(
    S: SemiringMatrix,
    T: SemiringMatrix,
    P: SemiringMatrix,
    product: Product,
) -> Tuple[np.ndarray, int]:
    n = S.n
    needed = _needed(P)
    Q = np.zeros((n, n), dtype=np.int64)
    bits = bit_count(n)
    for i in range(bits):
        members = [v for v in range(n) if (v >> i) & 1]
        P_i = product(mask(S, cols=members), mask(T, rows=members))
        # the bit is set when some witness survives the mask
        hit = np.asarray(np.equal(P_i.entries, P.entries), dtype=bool) & needed
        Q[hit] |= 1 << i
    return Q, bits


def witness_unique(
    S: SemiringMatrix,
    T: SemiringMatrix,
    P: SemiringMatrix,
    product: Product,
) -> WitnessResult:
    """Exactly ⌈log₂ n⌉ product calls; pairs whose candidate fails verification become UNKNOWN."""
    check_compatible(S, T, P)
    candidates, calls = _unique_candidates(S, T, P, product)
    Q = np.full(candidates.shape, UNKNOWN, dtype=np.int64)
    unknown = set()
    for u, v in zip(*np.nonzero(_needed(P))):
        u, v = int(u), int(v)
        w = int(candidates[u, v])
        if _is_witness(S, T, P, u, w, v):
            Q[u, v] = w
        else:
            unknown.add((u, v))
    logger.debug("unique witnesses: %d of %d pairs unresolved", len(unknown), int(_needed(P).sum()))
    return WitnessResult(Q, unknown, calls)


def _sample_rng(net: Optional[CliqueNetwork], seed: int, level: int, trial: int) -> np.random.Generator:
    if net is not None:
        return net.shared_rng("witness", seed, level, trial)
    return np.random.default_rng(np.random.SeedSequence([seed % (2 ** 64), level, trial]))


def witness_general(
    S: SemiringMatrix,
    T: SemiringMatrix,
    P: SemiringMatrix,
    product: Product,
    seed: Optional[int] = None,
    c: Optional[float] = None,
    net: Optional[CliqueNetwork] = None,
) -> WitnessResult:
    """
    Witnesses for every pair with high probability.

    After a unique-witness pass, level i = 0..⌈log₂ n⌉-1 draws m = ⌈c log₂ n⌉
    subsets V_j of 2^i indices (with replacement) and runs the unique procedure
    on S(*, V_j) ⊗ T(V_j, *). A pair adopts the first verified witness; levels
    stop once nothing is unknown. Leftover pairs are reported in `unknown`.
    """
    check_compatible(S, T, P)
    settings = load_settings()
    c = settings.witness_c if c is None else c
    if c <= 0:
        raise ValueError(f"confidence constant c must be positive, got {c}")
    seed = (net.seed if net is not None else settings.seed) if seed is None else seed

    n = S.n
    result = witness_unique(S, T, P, product)
    Q, unknown, calls = result.Q, result.unknown, result.product_calls
    bits = bit_count(n)
    trials = math.ceil(c * bits)
    samples: List[WitnessSample] = []

    for level in range(bits):
        if not unknown:
            break
        for trial in range(trials):
            if not unknown:
                break
            rng = _sample_rng(net, seed, level, trial)
            members = np.unique(rng.integers(0, n, size=2 ** level))
            samples.append(WitnessSample(level, trial, members))
            S_j, T_j = mask(S, cols=members), mask(T, rows=members)
            P_j = product(S_j, T_j)
            candidates, used = _unique_candidates(S_j, T_j, P_j, product)
            calls += 1 + used
            for u, v in sorted(unknown):
                w = int(candidates[u, v])
                if _is_witness(S, T, P, u, w, v):
                    Q[u, v] = w
                    unknown.discard((u, v))
        logger.debug("witness level %d: %d pairs unknown after %d product calls", level, len(unknown), calls)

    if unknown:
        logger.warning("%d pairs still lack a verified witness (c=%g)", len(unknown), c)
    return WitnessResult(Q, unknown, calls, samples)
