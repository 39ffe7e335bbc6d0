"""Feedback code constructions, encoders, decoders and entropy coding.

Codes implemented:

* naive listing of the active users (``k * ceil(log2 n)`` bits),
* the two-user most-significant-differing-bit code, fixed and variable length,
* random partition families with the greedy encoder and per-user table decoder,
* Huffman coding of encoder output.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from cfsched.core import ActivityPattern, CodeParams, FeedbackMessage, PartitionFamily
from cfsched.covering import (
    DEFAULT_PATTERN_CAP,
    _check_guard,
    covered_mask,
    first_uncovered,
    iter_pattern_chunks,
)
from cfsched.errors import (
    BuildFailed,
    DimensionMismatch,
    EmptyDistribution,
    InvalidEpsilon,
    InvalidParams,
    NotPowerOfTwo,
    Uncovered,
    UserNotListed,
)
from cfsched.rng import stream


# ---------------------------------------------------------------------------
# distributions and prefix codes


@dataclass(frozen=True)
class SymbolDistribution:
    """Probabilities over symbols ``0..T-1``; may sum to less than one.

    The missing mass is the probability that the encoder has no valid output
    (an uncovered pattern). Entries may be floats or exact Fractions.
    """

    probs: tuple

    def __post_init__(self):
        probs = tuple(self.probs)
        for p in probs:
            if p < 0 or p > 1:
                raise InvalidParams(f"probability {p} outside [0, 1]")
        if sum(probs) > 1 + 1e-12:
            raise InvalidParams(f"probabilities sum to {float(sum(probs))} > 1")
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return len(self.probs)

    @property
    def residual(self):
        return 1 - sum(self.probs)

    def entropy(self) -> float:
        """Operational entropy in bits, -sum p log2 p over the listed symbols."""
        return -sum(float(p) * math.log2(p) for p in self.probs if p > 0)


@dataclass(frozen=True)
class PrefixCode:
    """Codeword per symbol; symbols absent from ``codewords`` have no codeword."""

    codewords: dict

    @property
    def lengths(self) -> dict:
        return {s: len(w) for s, w in self.codewords.items()}

    def kraft_sum(self) -> Fraction:
        return sum((Fraction(1, 2 ** len(w)) for w in self.codewords.values()), Fraction(0))

    def is_prefix_free(self) -> bool:
        words = sorted(self.codewords.values())
        if len(words) == 1:
            return True
        return all(not b.startswith(a) for a, b in zip(words, words[1:]))

    def encode(self, symbols) -> str:
        return "".join(self.codewords[s] for s in symbols)

    def decode(self, bits: str) -> list:
        lookup = {w: s for s, w in self.codewords.items()}
        if len(lookup) == 1 and "" in lookup:
            raise ValueError("a single zero-length codeword cannot delimit a stream")
        out, cur = [], ""
        for ch in bits:
            cur += ch
            if cur in lookup:
                out.append(lookup[cur])
                cur = ""
        if cur:
            raise ValueError(f"trailing bits {cur!r} do not form a codeword")
        return out


def canonical_codewords(lengths: dict) -> dict:
    """Canonical prefix code for ``{symbol: length}``, ordered by (length, symbol)."""
    code, prev = 0, 0
    out = {}
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev
        out[sym] = format(code, f"0{ln}b") if ln else ""
        code += 1
        prev = ln
    return out


def huffman_lengths(weights: dict) -> dict:
    """Optimal codeword lengths for positive ``{symbol: weight}``.

    Equal weights merge lowest symbol first. One symbol gets length 0.
    """
    items = [(w, s) for s, w in weights.items() if w > 0]
    if not items:
        raise EmptyDistribution("no symbol has positive probability")
    if len(items) == 1:
        return {items[0][1]: 0}
    heap = [(w, s, s, None) for w, s in items]  # (weight, min symbol, leaf, children)
    heapq.heapify(heap)
    while len(heap) > 1:
        a = heapq.heappop(heap)
        b = heapq.heappop(heap)
        heapq.heappush(heap, (a[0] + b[0], min(a[1], b[1]), None, (a, b)))
    lengths = {}
    todo = [(heap[0], 0)]
    while todo:
        node, depth = todo.pop()
        if node[3] is None:
            lengths[node[2]] = depth
        else:
            todo.extend((child, depth + 1) for child in node[3])
    return lengths


def huffman_build(dist) -> PrefixCode:
    """Huffman code for a distribution; zero-mass symbols get no codeword."""
    probs = dist.probs if isinstance(dist, SymbolDistribution) else tuple(dist)
    return PrefixCode(canonical_codewords(huffman_lengths(dict(enumerate(probs)))))


def average_length(code: PrefixCode, dist):
    """Expected codeword length in bits; exact when ``dist`` holds Fractions."""
    probs = dist.probs if isinstance(dist, SymbolDistribution) else tuple(dist)
    total = 0
    for sym, p in enumerate(probs):
        if p > 0:
            total += p * len(code.codewords[sym])
    return total


def entropy_bits(counts_or_probs) -> float:
    x = np.asarray(counts_or_probs, dtype=float)
    x = x[x > 0]
    if not len(x):
        return 0.0
    p = x / x.sum()
    return float(-(p * np.log2(p)).sum())


# ---------------------------------------------------------------------------
# naive listing code


def naive_width(n: int) -> int:
    return (n - 1).bit_length()


def naive_encode(pattern, params: CodeParams) -> str:
    if params.m != 1 or params.b < params.k:
        raise InvalidParams("the listing code needs m=1 and b>=k")
    users = _users(pattern, params.n, params.k)
    w = naive_width(params.n)
    return "".join(format(u, f"0{w}b") if w else "" for u in users)


def naive_decode(bits: str, user: int, n: int) -> int:
    w = naive_width(n)
    if w == 0:
        if bits == "" and user == 0:
            return 0
        raise UserNotListed(f"user {user} not listed")
    if len(bits) % w:
        raise InvalidParams(f"message length {len(bits)} is not a multiple of {w}")
    for j in range(len(bits) // w):
        if int(bits[j * w : (j + 1) * w], 2) == user:
            return j
    raise UserNotListed(f"user {user} not listed")


def naive_rate(n: int, k: int) -> int:
    return k * naive_width(n)


# ---------------------------------------------------------------------------
# two-user code


def _index_bits(n: int) -> int:
    return max(1, (n - 1).bit_length())


def twouser_fixed_encode(pattern, n: int) -> int:
    """1-based position, from the most significant bit, where the two indices differ."""
    a, b = _users(pattern, n, 2)
    l = _index_bits(n)
    return l - (a ^ b).bit_length() + 1


twouser_var_encode = twouser_fixed_encode


def twouser_decode(t: int, user: int, n: int) -> int:
    l = _index_bits(n)
    if not 1 <= t <= l:
        raise InvalidParams(f"position {t} outside [1,{l}]")
    if not 0 <= user < n:
        raise DimensionMismatch(f"user {user} outside [0,{n})")
    return (user >> (l - t)) & 1


def twouser_fixed_bits(n: int) -> int:
    return (_index_bits(n) - 1).bit_length()


def twouser_family(n: int) -> PartitionFamily:
    """The two-user code as a partition family: partition t-1 splits on bit t."""
    l = _index_bits(n)
    users = np.arange(n)
    rows = np.stack([(users >> (l - t)) & 1 for t in range(1, l + 1)])
    return PartitionFamily.from_matrix(rows, 2)


def twouser_var_distribution(n: int) -> SymbolDistribution:
    """Law of the most significant differing position of a uniform pair (symbol t-1)."""
    if n < 2 or n & (n - 1):
        raise NotPowerOfTwo(f"n={n} is not a power of two >= 2")
    l = n.bit_length() - 1
    return SymbolDistribution(tuple(Fraction(2 ** (l - t), 2**l - 1) for t in range(1, l + 1)))


def twouser_var_rate(n: int) -> Fraction:
    """Closed form 2 - (log2 n + 1)/(n - 1) for n a power of two."""
    if n < 2 or n & (n - 1):
        raise NotPowerOfTwo(f"n={n} is not a power of two >= 2")
    return 2 - Fraction(n.bit_length(), n - 1)


# ---------------------------------------------------------------------------
# random families


def cover_count_assignments(b: int, k: int, m: int) -> int:
    """Number of ways to drop k labelled users into b slots with at most m per slot."""
    if m == 1:
        return math.perm(b, k)
    ways = [1] + [0] * k
    for _ in range(b):
        nxt = [0] * (k + 1)
        for j in range(k + 1):
            acc = 0
            for i in range(min(m, j) + 1):
                if ways[j - i]:
                    acc += math.comb(j, i) * ways[j - i]
            nxt[j] = acc
        ways = nxt
    return ways[k]


def cover_probability(params: CodeParams) -> Fraction:
    """Exact chance that one uniform random b-partition covers a fixed pattern."""
    return Fraction(cover_count_assignments(params.b, params.k, params.m), params.b**params.k)


def random_family(params: CodeParams, T: int, seed: int, round: int = 0) -> PartitionFamily:
    """T partitions with i.i.d. uniform slots; partition t uses stream (seed, round, t)."""
    if T < 1:
        raise InvalidParams(f"T<1 (T={T})")
    rows = np.stack(
        [stream(seed, round, t).integers(0, params.b, size=params.n) for t in range(T)]
    )
    return PartitionFamily.from_matrix(rows, params.b)


def required_T(params: CodeParams, epsilon: float) -> int:
    """Family size at which a random family covers everything w.p. >= 1 - epsilon.

    ceil(ln(C(n,k)/epsilon) / p), with p the exact single-partition cover
    probability: b^(k falling)/b^k for m=1, k!/(b^k (m!)^b) when k=mb.
    """
    if not 0 < epsilon < 1:
        raise InvalidEpsilon(f"epsilon={epsilon} outside (0, 1)")
    log_count = math.log(math.comb(params.n, params.k)) - math.log(epsilon)
    p = cover_probability(params)
    return max(1, math.ceil(Fraction(log_count) / p))


def log2_required_T(params: CodeParams, epsilon: float) -> float:
    return math.log2(required_T(params, epsilon))


# ---------------------------------------------------------------------------
# greedy encoder and decoder


def _users(pattern, n: int | None = None, k: int | None = None) -> tuple[int, ...]:
    users = pattern.users if isinstance(pattern, ActivityPattern) else tuple(sorted(pattern))
    if k is not None and len(users) != k:
        raise InvalidParams(f"pattern has {len(users)} users, expected {k}")
    if len(set(users)) != len(users):
        raise InvalidParams(f"duplicate users in {users}")
    if n is not None and users and (users[0] < 0 or users[-1] >= n):
        raise DimensionMismatch(f"pattern {users} has users outside [0,{n})")
    return users


def greedy_encode(family: PartitionFamily, pattern, m: int = 1) -> FeedbackMessage:
    """Smallest t whose partition covers the pattern; :class:`Uncovered` if none."""
    users = _users(pattern, family.n)
    cols = np.asarray(users, dtype=np.int64)[None, :]
    hits = np.flatnonzero(covered_mask(family.matrix, cols, m)[:, 0])
    if not len(hits):
        raise Uncovered(users)
    return FeedbackMessage(int(hits[0]), family.T)


def greedy_encode_batch(family: PartitionFamily, patterns: np.ndarray, m: int = 1) -> np.ndarray:
    """Greedy index for each row of an N x k array; -1 marks uncovered."""
    out = np.full(len(patterns), -1, dtype=np.int64)
    pending = np.arange(len(patterns))
    for t, row in enumerate(family.matrix):
        if not len(pending):
            break
        ok = covered_mask(row, patterns[pending], m)
        out[pending[ok]] = t
        pending = pending[~ok]
    return out


def decode(family: PartitionFamily, t, user: int) -> int:
    """Slot of ``user`` under feedback index ``t``."""
    idx = t.index if isinstance(t, FeedbackMessage) else t
    if not 0 <= idx < family.T:
        raise InvalidParams(f"feedback index {idx} outside [0,{family.T})")
    if not 0 <= user < family.n:
        raise DimensionMismatch(f"user {user} outside [0,{family.n})")
    return family.partitions[idx].assignment[user]


# ---------------------------------------------------------------------------
# certified construction and exact output law


class VerifiedFamily(NamedTuple):
    family: PartitionFamily
    round: int
    T_drawn: int


def build_verified_family(
    params: CodeParams,
    seed: int,
    max_rounds: int = 20,
    epsilon: float = 0.5,
    T: int | None = None,
    trim: bool = False,
    cap: int = DEFAULT_PATTERN_CAP,
    workers: int = 1,
) -> VerifiedFamily:
    """Draw random families until one is certified to cover every pattern.

    Each round succeeds with probability at least 1 - epsilon, so failing all
    ``max_rounds`` has probability at most epsilon**max_rounds. With ``trim``
    the family is cut after the last index the greedy encoder ever uses.
    """
    size = T if T is not None else required_T(params, epsilon)
    for rnd in range(max_rounds):
        fam = random_family(params, size, seed, round=rnd)
        if first_uncovered(fam, params, cap=cap, workers=workers) is None:
            if trim:
                counts, _ = greedy_index_counts(fam, params, cap=cap)
                last = int(np.flatnonzero(counts)[-1])
                fam = PartitionFamily(fam.partitions[: last + 1])
            return VerifiedFamily(fam, rnd, size)
    raise BuildFailed(f"no covering family of size {size} after {max_rounds} rounds")


def greedy_index_counts(
    family: PartitionFamily, params: CodeParams, cap: int = DEFAULT_PATTERN_CAP
) -> tuple[np.ndarray, int]:
    """Per-index pattern counts of the greedy encoder over all k-subsets, plus uncovered."""
    if family.n != params.n:
        raise DimensionMismatch(f"family has n={family.n}, instance has n={params.n}")
    _check_guard(params.n, params.k, cap)
    counts = np.zeros(family.T, dtype=np.int64)
    uncovered = 0
    for block in iter_pattern_chunks(params.n, params.k):
        idx = greedy_encode_batch(family, block, params.m)
        uncovered += int((idx < 0).sum())
        counts += np.bincount(idx[idx >= 0], minlength=family.T)
    return counts, uncovered


def encoder_output_distribution(
    family: PartitionFamily, params: CodeParams, cap: int = DEFAULT_PATTERN_CAP
) -> SymbolDistribution:
    """Exact greedy output law under uniform activity; the residual is the uncovered share."""
    counts, _ = greedy_index_counts(family, params, cap)
    total = math.comb(params.n, params.k)
    return SymbolDistribution(tuple(float(c) / total for c in counts))


def local_search_min_entropy(
    family: PartitionFamily, params: CodeParams, max_n: int = 6
) -> tuple[dict, float]:
    """Heuristic lower-entropy encoder for toy instances.

    Starts from the greedy assignment and repeatedly moves a pattern to the
    covering index with the largest current mass while that strictly lowers
    the output entropy. Returns (pattern -> index, entropy bits). Not a proof
    of optimality.
    """
    if params.n > max_n:
        raise InvalidParams(f"local search is limited to n<={max_n}")
    patterns = np.array(list(itertools.combinations(range(params.n), params.k)))
    cov = covered_mask(family.matrix, patterns, params.m)  # T x N
    if not cov.any(axis=0).all():
        raise Uncovered(tuple(patterns[np.flatnonzero(~cov.any(axis=0))[0]]))
    choice = cov.argmax(axis=0)
    counts = np.bincount(choice, minlength=family.T)
    changed = True
    while changed:
        changed = False
        for j in range(len(patterns)):
            cur = choice[j]
            opts = np.flatnonzero(cov[:, j])
            best = opts[np.argmax(counts[opts])]
            if best != cur and counts[best] >= counts[cur]:
                counts[cur] -= 1
                counts[best] += 1
                choice[j] = best
                changed = True
    mapping = {tuple(p.tolist()): int(c) for p, c in zip(patterns, choice)}
    return mapping, entropy_bits(counts)
