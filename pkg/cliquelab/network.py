"""
Congested Clique Simulator

A synchronous network of n nodes, every pair joined by a link that carries one
O(log n)-bit word per round in each direction. Algorithms hand whole batches of
messages to a routing primitive; the simulator fragments them into words, picks a
schedule, checks the one-word-per-ordered-pair-per-round rule on a ledger, and
charges the rounds.

Words a node sends to itself are delivered for free and never enter the ledger.
"""

import logging
import math
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config import load_settings

logger = logging.getLogger(__name__)


# ==================== ERRORS ====================

class WordWidthError(ValueError):
    """A broadcast value that does not fit in one word"""


class RoutingLoadError(ValueError):
    """A node exceeds the per-node load a balanced routing call was promised"""

    def __init__(self, bound: float, n: int, loads: Dict[int, Tuple[int, int]]):
        worst = ", ".join(f"node {v}: out={o} in={i}" for v, (o, i) in sorted(loads.items())[:8])
        super().__init__(
            f"balanced routing with c={bound} allows {bound * n:g} words per node; {worst}"
        )
        self.bound = bound
        self.loads = loads


class LedgerViolation(RuntimeError):
    """Two words scheduled on the same link in the same round"""


# ==================== WIRE TYPES ====================

@dataclass(frozen=True)
class Message:
    """
    A payload of `words` words travelling from src to dst.

    `tag` is position metadata (which block, which row) carried into the ledger
    when payload recording is on.
    """
    src: int
    dst: int
    payload: Any
    words: int = 1
    tag: Any = None


@dataclass(frozen=True)
class AddressedWord:
    """One ledger slot"""
    src: int
    dst: int
    round: int
    payload: Any = None


Inbox = Dict[int, List[Message]]


# ==================== STATS ====================

@dataclass
class PhaseStats:
    """Cost charged under one phase label"""
    label: str
    rounds: int = 0
    words: int = 0
    offered_out: int = 0
    offered_in: int = 0
    calls: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "rounds": self.rounds,
            "words": self.words,
            "offered_out": self.offered_out,
            "offered_in": self.offered_in,
        }


@dataclass
class RoundStats:
    """A snapshot of everything a network has been charged"""
    n: int
    seed: int
    rounds_total: int
    max_out: int
    max_in: int
    total_words: int
    algorithm: Optional[str] = None
    phases: List[PhaseStats] = field(default_factory=list)

    def phase(self, label: str) -> PhaseStats:
        for p in self.phases:
            if p.label == label:
                return p
        raise KeyError(label)

    def rounds_under(self, prefix: str) -> int:
        """Rounds of every phase labelled `prefix` or nested below it."""
        return sum(
            p.rounds for p in self.phases
            if p.label == prefix or p.label.startswith(prefix + "/")
        )

    def phases_ending(self, suffix: str) -> List[PhaseStats]:
        return [p for p in self.phases if p.label == suffix or p.label.endswith("/" + suffix)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "n": self.n,
            "rounds_total": self.rounds_total,
            "phases": [p.to_dict() for p in self.phases],
            "max_out": self.max_out,
            "max_in": self.max_in,
            "total_words": self.total_words,
            "seed": self.seed,
        }


@dataclass
class _LedgerBlock:
    src: np.ndarray
    dst: np.ndarray
    rnd: np.ndarray
    message_index: Optional[np.ndarray] = None
    fragment: Optional[np.ndarray] = None
    messages: Optional[Sequence[Message]] = None


# ==================== NODE LAYOUT ====================

def integer_root(n: int, k: int) -> Optional[int]:
    """r with r**k == n, or None."""
    if n < 0:
        return None
    r = int(round(n ** (1.0 / k))) if n > 0 else 0
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


@dataclass(frozen=True)
class NodeLayout:
    """
    Mixed-radix labels for node ids.

    With radices (q, q, q) node v is the three-digit number v1 v2 v3 in base q,
    most significant digit first.
    """
    radices: Tuple[int, ...]

    def __post_init__(self):
        if not self.radices or any(r < 1 for r in self.radices):
            raise ValueError(f"radices must be positive, got {self.radices}")

    @classmethod
    def cube(cls, n: int) -> "NodeLayout":
        q = integer_root(n, 3)
        if q is None:
            raise ValueError(f"{n} is not a perfect cube")
        return cls((q, q, q))

    @property
    def n(self) -> int:
        return int(np.prod(self.radices))

    def digits(self, v: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in np.unravel_index(v, self.radices))

    def node(self, digits: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(digits), self.radices))

    def digit_table(self) -> Tuple[np.ndarray, ...]:
        """One array per digit position, indexed by node id."""
        return tuple(np.asarray(a) for a in np.unravel_index(np.arange(self.n), self.radices))


# ==================== SCHEDULING HELPERS ====================

def _rank_within(keys: np.ndarray) -> np.ndarray:
    """Stable position of every element inside its group of equal keys."""
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(keys, kind="stable")
    ordered = keys[order]
    boundary = np.ones(keys.size, dtype=bool)
    boundary[1:] = ordered[1:] != ordered[:-1]
    idx = np.arange(keys.size)
    group_start = np.maximum.accumulate(np.where(boundary, idx, 0))
    ranks = np.empty(keys.size, dtype=np.int64)
    ranks[order] = idx - group_start
    return ranks


def _span(rounds: np.ndarray) -> int:
    return int(rounds.max()) + 1 if rounds.size else 0


def _edge_colouring(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """
    Proper edge colouring of the bipartite multigraph senders → receivers with
    max-degree colours (König), built by alternating-path recolouring.
    """
    colours = np.full(src.size, -1, dtype=np.int64)
    at_src: Dict[int, Dict[int, int]] = {}
    at_dst: Dict[int, Dict[int, int]] = {}

    def smallest_free(table: Dict[int, int]) -> int:
        c = 0
        while c in table:
            c += 1
        return c

    for e in range(src.size):
        s, d = int(src[e]), int(dst[e])
        left = at_src.setdefault(s, {})
        right = at_dst.setdefault(d, {})
        a = smallest_free(left)
        if a not in right:
            chosen = a
        else:
            b = smallest_free(right)
            if b not in left:
                chosen = b
            else:
                # swap a/b along the alternating path leaving d on colour a
                path = []
                node, on_right, colour = d, True, a
                while True:
                    table = at_dst.get(node, {}) if on_right else at_src.get(node, {})
                    edge = table.get(colour)
                    if edge is None:
                        break
                    path.append(edge)
                    node = int(src[edge]) if on_right else int(dst[edge])
                    on_right = not on_right
                    colour = b if colour == a else a
                for edge in path:
                    del at_src[int(src[edge])][int(colours[edge])]
                    del at_dst[int(dst[edge])][int(colours[edge])]
                for edge in path:
                    colours[edge] = b if colours[edge] == a else a
                    at_src[int(src[edge])][int(colours[edge])] = edge
                    at_dst[int(dst[edge])][int(colours[edge])] = edge
                chosen = a
        colours[e] = chosen
        left[chosen] = e
        right[chosen] = e
    return colours


def balanced_round_budget(bound: float) -> int:
    """Rounds a balanced routing call with per-node load bound·n always fits in."""
    return 2 * int(math.ceil(bound)) + 2


def _stable_key(part: Any) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) % (2 ** 32)
    return zlib.crc32(str(part).encode("utf-8"))


# ==================== NETWORK ====================

class CliqueNetwork:
    """
    The n-node congested clique.

    All cost accounting happens here: every routing call advances the global round
    counter by the length of the schedule it used and adds its words to the ledger.
    """

    def __init__(
        self,
        n: int,
        seed: Optional[int] = None,
        keep_ledger: Optional[bool] = None,
        record_payloads: Optional[bool] = None,
    ):
        if n < 1:
            raise ValueError(f"a clique needs at least one node, got n={n}")
        settings = load_settings()
        self.n = int(n)
        self.seed = settings.seed if seed is None else int(seed)
        self.keep_ledger = settings.keep_ledger if keep_ledger is None else keep_ledger
        self.record_payloads = (
            settings.record_payloads if record_payloads is None else record_payloads
        )
        self.round_counter = 0
        self.algorithm: Optional[str] = None
        self._ledger: List[_LedgerBlock] = []
        self._phases: Dict[str, PhaseStats] = {}
        self._labels: List[str] = []
        self._max_out = 0
        self._max_in = 0
        self._total_words = 0
        self._routing_calls = 0

    def __repr__(self) -> str:
        return f"CliqueNetwork(n={self.n}, rounds={self.round_counter})"

    # ---------- phases and randomness ----------

    @contextmanager
    def phase(self, label: str) -> Iterator[None]:
        """Charge everything routed inside the block to `label` (nested labels join with '/')."""
        if not self._labels and self.algorithm is None:
            self.algorithm = label
        self._labels.append(label)
        try:
            yield
        finally:
            self._labels.pop()

    def _current_label(self) -> str:
        return "/".join(self._labels) if self._labels else "unlabelled"

    def shared_rng(self, *key: Any) -> np.random.Generator:
        """A generator every node can rebuild from the network seed and `key`."""
        entropy = [self.seed % (2 ** 64)] + [_stable_key(k) for k in key]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    # ---------- accounting ----------

    def _phase_stats(self) -> PhaseStats:
        label = self._current_label()
        if label not in self._phases:
            self._phases[label] = PhaseStats(label)
        return self._phases[label]

    def _commit(
        self,
        hops: Sequence[Tuple[np.ndarray, ...]],
        rounds: int,
        offered_out: int,
        offered_in: int,
        messages: Optional[Sequence[Message]] = None,
    ):
        n = self.n
        base = self.round_counter
        words = 0
        for hop in hops:
            src, dst, rnd = hop[0], hop[1], hop[2]
            if src.size == 0:
                continue
            if np.any(src == dst):
                raise LedgerViolation("a loopback word reached the ledger")
            if rnd.max() >= rounds:
                raise LedgerViolation("a word was scheduled past the end of its call")
            key = (rnd.astype(np.int64) * n + src) * n + dst
            if np.unique(key).size != key.size:
                raise LedgerViolation("two words share a link in the same round")
            self._max_out = max(self._max_out, int(np.bincount(rnd * n + src).max()))
            self._max_in = max(self._max_in, int(np.bincount(rnd * n + dst).max()))
            words += src.size
            if self.keep_ledger:
                block = _LedgerBlock(src=src, dst=dst, rnd=rnd + base)
                if self.record_payloads and messages is not None and len(hop) > 3:
                    block.message_index = hop[3]
                    block.fragment = hop[4]
                    block.messages = messages
                self._ledger.append(block)
        stats = self._phase_stats()
        stats.rounds += rounds
        stats.words += words
        stats.offered_out = max(stats.offered_out, offered_out)
        stats.offered_in = max(stats.offered_in, offered_in)
        stats.calls += 1
        self._total_words += words
        self.round_counter += rounds

    def idle(self, rounds: int):
        """Let `rounds` rounds pass without traffic."""
        if rounds > 0:
            self._commit([], rounds, 0, 0)

    def stats(self) -> RoundStats:
        return RoundStats(
            n=self.n,
            seed=self.seed,
            rounds_total=self.round_counter,
            max_out=self._max_out,
            max_in=self._max_in,
            total_words=self._total_words,
            algorithm=self.algorithm,
            phases=[PhaseStats(**vars(p)) for p in self._phases.values()],
        )

    def ledger_pattern(self) -> np.ndarray:
        """All ledger slots as sorted (round, src, dst) rows."""
        if not self._ledger:
            return np.zeros((0, 3), dtype=np.int64)
        rows = np.concatenate(
            [np.stack([b.rnd, b.src, b.dst], axis=1) for b in self._ledger]
        ).astype(np.int64)
        order = np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))
        return rows[order]

    def ledger_words(self, round_index: Optional[int] = None) -> Iterator[AddressedWord]:
        """Ledger slots, optionally restricted to one round; payloads when recorded."""
        for block in self._ledger:
            picks = np.arange(block.src.size)
            if round_index is not None:
                picks = np.flatnonzero(block.rnd == round_index)
            for i in picks:
                payload = None
                if block.messages is not None:
                    msg = block.messages[int(block.message_index[i])]
                    payload = (msg.tag, int(block.fragment[i]))
                yield AddressedWord(
                    int(block.src[i]), int(block.dst[i]), int(block.rnd[i]), payload
                )

    # ---------- message expansion ----------

    def _expand(self, messages: Sequence[Message]):
        count = len(messages)
        src = np.fromiter((m.src for m in messages), dtype=np.int64, count=count)
        dst = np.fromiter((m.dst for m in messages), dtype=np.int64, count=count)
        words = np.fromiter((m.words for m in messages), dtype=np.int64, count=count)
        if count:
            if src.min() < 0 or dst.min() < 0 or src.max() >= self.n or dst.max() >= self.n:
                raise ValueError(f"message addressed outside nodes 0..{self.n - 1}")
            if words.min() < 0:
                raise ValueError("message word counts must be non-negative")
        out_load = np.bincount(src, weights=words, minlength=self.n).astype(np.int64)
        in_load = np.bincount(dst, weights=words, minlength=self.n).astype(np.int64)
        msg_w = np.repeat(np.arange(count), words)
        starts = np.cumsum(words) - words
        frag_w = np.arange(msg_w.size) - np.repeat(starts, words)
        return src[msg_w], dst[msg_w], msg_w, frag_w, out_load, in_load

    def _deliver(self, messages: Sequence[Message]) -> Inbox:
        inbox: Inbox = {v: [] for v in range(self.n)}
        for m in sorted(messages, key=lambda m: m.src):
            inbox[m.dst].append(m)
        return inbox

    # ---------- routing primitives ----------

    def route_oblivious(self, messages: Sequence[Message], relay: bool = True) -> Inbox:
        """
        Deliver an arbitrary batch with a schedule that depends only on the
        (src, dst, words) pattern and the seed: the shorter of direct sending and a
        two-hop relay through seeded intermediates.
        """
        messages = list(messages)
        n = self.n
        src, dst, msg, frag, out_load, in_load = self._expand(messages)
        remote = src != dst
        s, d, mi, fr = src[remote], dst[remote], msg[remote], frag[remote]

        direct = _rank_within(s * n + d)
        hops = [(s, d, direct, mi, fr)]
        rounds = _span(direct)
        choice = "direct"

        if relay and n > 2 and s.size:
            offsets = self.shared_rng("relay", self._routing_calls).integers(0, n, size=n)
            mid = (_rank_within(s) + offsets[s]) % n
            a = mid != s
            first = _rank_within(s[a] * n + mid[a])
            rounds_a = _span(first)
            b = mid != d
            second = _rank_within(mid[b] * n + d[b])
            relay_rounds = rounds_a + _span(second)
            if relay_rounds < rounds:
                hops = [
                    (s[a], mid[a], first, mi[a], fr[a]),
                    (mid[b], d[b], second + rounds_a, mi[b], fr[b]),
                ]
                rounds = relay_rounds
                choice = "relay"

        self._routing_calls += 1
        self._commit(hops, rounds, int(out_load.max()), int(in_load.max()), messages)
        logger.debug(
            "%s: routed %d words in %d rounds (%s)",
            self._current_label(), int(s.size), rounds, choice,
        )
        return self._deliver(messages)

    def route_balanced(
        self,
        messages: Sequence[Message],
        bound: float,
        synchronize: bool = False,
    ) -> Inbox:
        """
        Deliver a batch in which every node sends and receives at most bound·n
        words, in at most 2⌈bound⌉ rounds (relay through an edge colouring) or
        fewer when direct sending is shorter. With synchronize=True the call always
        lasts balanced_round_budget(bound) rounds.
        """
        messages = list(messages)
        n = self.n
        src, dst, msg, frag, out_load, in_load = self._expand(messages)
        limit = bound * n
        heavy = np.flatnonzero((out_load > limit) | (in_load > limit))
        if heavy.size:
            raise RoutingLoadError(
                bound, n, {int(v): (int(out_load[v]), int(in_load[v])) for v in heavy}
            )

        remote = src != dst
        s, d, mi, fr = src[remote], dst[remote], msg[remote], frag[remote]
        direct = _rank_within(s * n + d)
        hops = [(s, d, direct, mi, fr)]
        rounds = _span(direct)
        choice = "direct"

        if n > 2 and s.size and rounds > 2:
            colours = _edge_colouring(s, d)
            mid = colours % n
            slot = colours // n
            rounds_a = _span(slot)
            if 2 * rounds_a < rounds:
                a = mid != s
                b = mid != d
                hops = [
                    (s[a], mid[a], slot[a], mi[a], fr[a]),
                    (mid[b], d[b], slot[b] + rounds_a, mi[b], fr[b]),
                ]
                rounds = 2 * rounds_a
                choice = "relay"

        if synchronize:
            budget = balanced_round_budget(bound)
            if rounds > budget:
                raise LedgerViolation(f"balanced schedule took {rounds} > {budget} rounds")
            rounds = budget

        self._routing_calls += 1
        self._commit(hops, rounds, int(out_load.max()), int(in_load.max()), messages)
        logger.debug(
            "%s: balanced %d words in %d rounds (%s, c=%g)",
            self._current_label(), int(s.size), rounds, choice, bound,
        )
        return self._deliver(messages)

    def broadcast_all(self, values: Sequence[Any]) -> Tuple[Any, ...]:
        """Node v announces values[v] to everyone; one round. Every node holds the result."""
        values = list(values)
        if len(values) != self.n:
            raise ValueError(f"expected {self.n} values, got {len(values)}")
        for v, value in enumerate(values):
            if np.ndim(value) != 0 or isinstance(value, (str, bytes, tuple, list)):
                raise WordWidthError(f"node {v} tried to broadcast a multi-word value {value!r}")
        n = self.n
        src = np.repeat(np.arange(n), n - 1)
        dst = (src + 1 + np.tile(np.arange(n - 1), n)) % n
        self._commit([(src, dst, np.zeros(src.size, dtype=np.int64))], 1, n - 1, n - 1)
        return tuple(values)

    def broadcast_lists(self, lists: Sequence[Sequence[Any]]) -> Tuple[Tuple[Any, ...], ...]:
        """
        Every node learns every node's list. Item g of the concatenation is parked
        at relay g mod n, then each relay re-broadcasts what it holds one item per
        round. List lengths must already be common knowledge.
        """
        lists = [tuple(items) for items in lists]
        if len(lists) != self.n:
            raise ValueError(f"expected {self.n} lists, got {len(lists)}")
        n = self.n
        lengths = np.array([len(items) for items in lists], dtype=np.int64)
        total = int(lengths.sum())
        owner = np.repeat(np.arange(n), lengths)
        mid = np.arange(total) % n

        a = owner != mid
        first = _rank_within(owner[a] * n + mid[a])
        rounds_a = _span(first)
        held = _rank_within(mid)
        src = np.repeat(mid, n - 1)
        dst = ((mid[:, None] + 1 + np.arange(n - 1)[None, :]) % n).ravel()
        rnd = np.repeat(held, n - 1) + rounds_a
        rounds = rounds_a + _span(held) if n > 1 else 0

        out_load = int(lengths.max(initial=0)) * max(n - 1, 0)
        self._commit(
            [(owner[a], mid[a], first), (src, dst, rnd)],
            rounds,
            out_load,
            (total - int(lengths.min(initial=0))),
        )
        return tuple(lists)
