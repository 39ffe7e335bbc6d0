"""Covering predicates, exact coverage counts and desk-scale exhaustive oracles.

A partition *covers* an activity pattern when no slot receives more than ``m``
of its users. A family satisfies the zero-error condition when the union of
its coverings is every k-subset of ``[0, n)``.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, NamedTuple

import numpy as np

from cfsched.core import ActivityPattern, CodeParams, Partition, PartitionFamily
from cfsched.errors import DimensionMismatch, InvalidParams, TooLarge

DEFAULT_PATTERN_CAP = 10**8
DEFAULT_CHUNK = 1 << 16
EXACT_MAX_N = 10
EXACT_MAX_K = 4


def covers(partition: Partition, pattern, m: int = 1) -> bool:
    users = pattern.users if isinstance(pattern, ActivityPattern) else tuple(pattern)
    if m < 1:
        raise InvalidParams(f"m<1 (m={m})")
    if users and max(users) >= partition.n:
        raise DimensionMismatch(f"user {max(users)} outside partition of n={partition.n}")
    load: dict[int, int] = {}
    assignment = partition.assignment
    for u in users:
        s = assignment[u]
        c = load.get(s, 0) + 1
        if c > m:
            return False
        load[s] = c
    return True


def coverage_count(partition: Partition, k: int, m: int = 1) -> int:
    """Exact number of k-subsets covered, |C(X, m)|.

    Coefficient of x^k in prod_j sum_{i<=m} C(s_j, i) x^i, where s_j are the
    slot sizes. Python integers never overflow, so no escalation is needed.
    """
    if k > m * partition.b:
        return 0
    poly = [1]
    for size in partition.sizes():
        factor = [math.comb(size, i) for i in range(min(m, size) + 1)]
        out = [0] * min(len(poly) + len(factor) - 1, k + 1)
        for a, ca in enumerate(poly):
            if ca == 0:
                continue
            for i, ci in enumerate(factor):
                if a + i > k:
                    break
                out[a + i] += ca * ci
        poly = out
    return poly[k] if k < len(poly) else 0


def _check_guard(n: int, k: int, cap: int) -> int:
    count = math.comb(n, k)
    if count > cap:
        raise TooLarge(f"C({n},{k})={count} patterns exceeds the enumeration cap {cap}")
    return count


def iter_pattern_chunks(n: int, k: int, chunk: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
    """All k-subsets of [0, n) in lexicographic order, as ``(<=chunk) x k`` arrays."""
    combos = itertools.combinations(range(n), k)
    dtype = np.dtype((np.int64, (k,)))
    while True:
        block = np.fromiter(itertools.islice(combos, chunk), dtype=dtype)
        if not len(block):
            return
        yield block.reshape(-1, k)


def covered_mask(assignment: np.ndarray, patterns: np.ndarray, m: int = 1) -> np.ndarray:
    """Boolean vector: which rows of ``patterns`` the partition covers.

    ``assignment`` may also be 2-D (P x n), giving a P x N result.
    """
    slots = np.sort(assignment[..., patterns], axis=-1)
    k = patterns.shape[1]
    if k <= m:
        return np.ones(slots.shape[:-1], dtype=bool)
    # after sorting, a slot holds more than m users iff some run spans m+1 entries
    return ~np.any(slots[..., m:] == slots[..., :-m], axis=-1)


def _first_uncovered_in_chunk(matrix: np.ndarray, block: np.ndarray, m: int):
    pending = np.ones(len(block), dtype=bool)
    for row in matrix:
        idx = np.flatnonzero(pending)
        if not len(idx):
            return None
        pending[idx[covered_mask(row, block[idx], m)]] = False
    idx = np.flatnonzero(pending)
    return tuple(block[idx[0]].tolist()) if len(idx) else None


def first_uncovered(
    family: PartitionFamily,
    params: CodeParams,
    cap: int = DEFAULT_PATTERN_CAP,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> ActivityPattern | None:
    """Lexicographically first k-subset no partition covers, or ``None``."""
    if family.n != params.n:
        raise DimensionMismatch(f"family has n={family.n}, instance has n={params.n}")
    _check_guard(params.n, params.k, cap)
    matrix = family.matrix
    chunks = iter_pattern_chunks(params.n, params.k, chunk)
    if workers <= 1:
        for block in chunks:
            hit = _first_uncovered_in_chunk(matrix, block, params.m)
            if hit is not None:
                return ActivityPattern(hit, params.n)
        return None
    # bounded window of in-flight chunks, consumed in order: the first hit is
    # the lexicographic minimum regardless of which worker finishes first
    with ThreadPoolExecutor(max_workers=workers) as pool:
        window: deque = deque()
        for block in chunks:
            window.append(pool.submit(_first_uncovered_in_chunk, matrix, block, params.m))
            if len(window) >= 2 * workers:
                hit = window.popleft().result()
                if hit is not None:
                    for f in window:
                        f.cancel()
                    return ActivityPattern(hit, params.n)
        while window:
            hit = window.popleft().result()
            if hit is not None:
                for f in window:
                    f.cancel()
                return ActivityPattern(hit, params.n)
    return None


def family_covers_all(
    family: PartitionFamily,
    params: CodeParams,
    cap: int = DEFAULT_PATTERN_CAP,
    workers: int = 1,
) -> bool:
    return first_uncovered(family, params, cap=cap, workers=workers) is None


# ---------------------------------------------------------------------------
# exact minimal family size


class MinimalFamily(NamedTuple):
    T: int
    family: PartitionFamily
    nodes: int


def canonical_partitions(n: int, blocks: int) -> np.ndarray:
    """Every partition of [0, n) into exactly ``blocks`` nonempty slots, once.

    Slot labels are fixed by first occurrence (restricted growth strings), so
    relabelings of the same split are not repeated.
    """
    out: list[tuple[int, ...]] = []
    seq = [0] * n

    def rec(i: int, used: int):
        if n - i < blocks - used:
            return
        if i == n:
            if used == blocks:
                out.append(tuple(seq))
            return
        for s in range(min(used + 1, blocks)):
            seq[i] = s
            rec(i + 1, used + (s == used))

    if n:
        seq[0] = 0
        rec(1, 1)
    return np.array(out, dtype=np.int64).reshape(-1, n)


def _size_signatures(n: int, blocks: int) -> list[tuple[int, ...]]:
    """Integer partitions of n into exactly ``blocks`` positive parts, descending."""
    res: list[tuple[int, ...]] = []

    def rec(remaining: int, parts: int, cap: int, acc: list[int]):
        if parts == 0:
            if remaining == 0:
                res.append(tuple(acc))
            return
        for size in range(min(cap, remaining - (parts - 1)), 0, -1):
            if size * parts < remaining:
                break
            acc.append(size)
            rec(remaining - size, parts - 1, size, acc)
            acc.pop()

    rec(n, blocks, n, [])
    return res


def _contiguous(sizes: tuple[int, ...]) -> np.ndarray:
    return np.repeat(np.arange(len(sizes)), sizes)


def _mask_to_int(bits: np.ndarray) -> int:
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def minimal_family_size(
    params: CodeParams,
    max_n: int = EXACT_MAX_N,
    max_k: int = EXACT_MAX_K,
) -> MinimalFamily:
    """Smallest T admitting a covering family, by exhaustive search.

    Iterative deepening on T with exact set-cover branching: every node picks
    the uncovered pattern with the fewest covering candidates and branches on
    those candidates. Two symmetries are removed up front: slot relabeling
    (candidates are restricted growth strings with exactly min(b, n) nonempty
    slots, which dominate partitions with fewer) and user relabeling (the first
    partition is fixed to one contiguous representative per sorted slot-size
    signature).
    """
    n, k, b, m = params.n, params.k, params.b, params.m
    if n > max_n or k > max_k:
        raise TooLarge(f"exact search limited to n<={max_n}, k<={max_k}; got n={n}, k={k}")
    blocks = min(b, n)
    patterns = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64).reshape(-1, k)
    N = len(patterns)
    full = (1 << N) - 1

    cands = canonical_partitions(n, blocks)
    cmask = covered_mask(cands, patterns, m)
    masks = [_mask_to_int(row) for row in cmask]
    # drop duplicate coverage sets; keep the first (lexicographically smallest) string
    seen: dict[int, int] = {}
    for i, msk in enumerate(masks):
        seen.setdefault(msk, i)
    keep = sorted(seen.values(), key=lambda i: (-cmask[i].sum(), i))
    cands = cands[keep]
    masks = [masks[i] for i in keep]
    pop = [bin(x).count("1") for x in masks]
    max_cover = max(pop)
    covering_of: list[list[int]] = [[] for _ in range(N)]
    for ci, msk in enumerate(masks):
        for pi in range(N):
            if msk >> pi & 1:
                covering_of[pi].append(ci)

    roots = []
    for sizes in _size_signatures(n, blocks):
        rep = _contiguous(sizes)
        roots.append((rep, _mask_to_int(covered_mask(rep, patterns, m))))
    roots.sort(key=lambda r: -bin(r[1]).count("1"))

    nodes = 0
    chosen: list[int] = []

    def search(uncovered: int, depth: int) -> bool:
        nonlocal nodes
        nodes += 1
        if uncovered == 0:
            return True
        if depth == 0:
            return False
        remaining = bin(uncovered).count("1")
        if remaining > depth * max_cover:
            return False
        if depth > 1:
            # no partition gains more than the best one on what is left
            best_gain = max(bin(msk & uncovered).count("1") for msk in masks)
            if remaining > depth * best_gain:
                return False
        best_p, best_opts = -1, None
        u = uncovered
        while u:
            low = u & -u
            pi = low.bit_length() - 1
            opts = covering_of[pi]
            if best_opts is None or len(opts) < len(best_opts):
                best_p, best_opts = pi, opts
                if len(opts) <= 1:
                    break
            u ^= low
        gains = sorted(((bin(masks[c] & uncovered).count("1"), c) for c in best_opts), reverse=True)
        for gain, c in gains:
            if remaining - gain > (depth - 1) * max_cover:
                break
            chosen.append(c)
            if search(uncovered & ~masks[c], depth - 1):
                return True
            chosen.pop()
        return False

    lower = max(1, -(-N // max_cover))
    T = lower
    while True:
        for rep, rmask in roots:
            chosen.clear()
            if search(full & ~rmask, T - 1):
                rows = [rep] + [cands[c] for c in chosen]
                fam = PartitionFamily(tuple(Partition(tuple(r.tolist()), b) for r in rows))
                return MinimalFamily(T, fam, nodes)
        T += 1
