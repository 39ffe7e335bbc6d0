"""Compress-hash-displace perfect hashing of an active set, as variable-length feedback.

The base station hashes the k active users into r = ceil(k / lam) buckets,
then walks the buckets from largest to smallest and gives each one the
smallest displacement d under which all its users land in free slots. The
feedback is the seed plus the displacement sequence, entropy coded. Every
user recomputes its own slot from the feedback with two hash evaluations.

Hash function
-------------
``mix`` is the splitmix64 output step on 64-bit words::

    z += 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^= z >> 31

and ``h(user, seed, level, d) = mix(mix(mix(seed ^ mix(level)) ^ d) ^ user)``.
A user's bucket is ``h(user, seed, 0, 0) mod r`` and its slot is
``h(user, seed, 1, d) mod b`` with ``d`` its bucket's displacement.

Wire format
-----------
All integers little endian::

    seed      u64
    b         u32
    r         u32
    L - 1     u8      number of displacement classes minus one
    lengths   L x u8  canonical Huffman code length of each class
    stream    bits    r coded displacements, MSB first, zero padded

A displacement ``d`` belongs to class ``c = floor(log2(d + 1))``. It is sent
as the Huffman codeword of ``c`` followed by the ``c`` low bits of ``d + 1``.
Classes that never occur have length 0. If every length is 0 the only class
is ``L - 1`` and its codeword is empty.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from cfsched.codes import canonical_codewords, huffman_lengths
from cfsched.core import ActivityPattern
from cfsched.errors import BuildExhausted, EmptyExperiment, InvalidParams, MalformedFile
from cfsched.rng import sample_subsets, stream

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB

DEFAULT_LAMBDA = 5.0
DEFAULT_MAX_DISPLACEMENT = 1 << 20
DEFAULT_ATTEMPTS = 8

_HEADER = struct.Struct("<QIIB")


def mix(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
    return z ^ (z >> np.uint64(31))


def hash_prefix(seed: int, level: int, d: int) -> int:
    return mix(mix(seed ^ mix(level)) ^ d)


def hash_user(user: int, seed: int, level: int, d: int) -> int:
    return mix(hash_prefix(seed, level, d) ^ user)


def _prefixes(seed: int, level: int, ds: np.ndarray) -> np.ndarray:
    base = np.uint64(mix(seed ^ mix(level)))
    return _mix_np(ds.astype(np.uint64) ^ base)


@dataclass(frozen=True)
class HashFeedback:
    seed: int
    b: int
    displacements: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise InvalidParams(f"seed {self.seed} is not a 64-bit value")
        if not 1 <= self.b < 1 << 32:
            raise InvalidParams(f"b={self.b} outside [1, 2^32)")
        disp = tuple(int(d) for d in self.displacements)
        if not 1 <= len(disp) < 1 << 32 or min(disp) < 0:
            raise InvalidParams("need 1..2^32-1 non-negative displacements")
        object.__setattr__(self, "displacements", disp)

    @property
    def bucket_count(self) -> int:
        return len(self.displacements)

    @cached_property
    def blob(self) -> bytes:
        return serialize_feedback(self)

    @property
    def bit_length(self) -> int:
        """Size of the emitted feedback in bits, headers and padding included."""
        return 8 * len(self.blob)


def _bucket_of(users: np.ndarray, seed: int, r: int) -> np.ndarray:
    h = _mix_np(users.astype(np.uint64) ^ np.uint64(hash_prefix(seed, 0, 0)))
    return (h % np.uint64(r)).astype(np.int64)


def _slots(users: np.ndarray, prefixes: np.ndarray, b: int) -> np.ndarray:
    h = _mix_np(prefixes[:, None] ^ users.astype(np.uint64)[None, :])
    return (h % np.uint64(b)).astype(np.int64)


def _first_fit(slots: np.ndarray, load: np.ndarray, m: int) -> int:
    """Index of the first candidate row that keeps every slot at <= m users, or -1."""
    if m == 1:
        ok = (load[slots] == 0).all(axis=1)
        if slots.shape[1] > 1:
            s = np.sort(slots, axis=1)
            ok &= (s[:, 1:] != s[:, :-1]).all(axis=1)
        hits = np.flatnonzero(ok)
        return int(hits[0]) if len(hits) else -1
    for i, row in enumerate(slots):
        vals, counts = np.unique(row, return_counts=True)
        if (load[vals] + counts <= m).all():
            return i
    return -1


def phash_build(
    pattern,
    b: int,
    seed: int,
    max_displacement: int = DEFAULT_MAX_DISPLACEMENT,
    lam: float = DEFAULT_LAMBDA,
    m: int = 1,
) -> HashFeedback:
    """Build a hash of the active users into ``[0, b)`` with at most ``m`` per slot.

    Raises :class:`BuildExhausted` when a bucket finds no displacement in
    ``[0, max_displacement]``; retry with another seed.
    """
    users = np.asarray(pattern.users if isinstance(pattern, ActivityPattern) else sorted(pattern), dtype=np.int64)
    k = len(users)
    if k == 0:
        raise InvalidParams("pattern is empty")
    if len(np.unique(users)) != k or users.min() < 0:
        raise InvalidParams("pattern must hold distinct non-negative user indices")
    if m < 1 or lam <= 0:
        raise InvalidParams(f"need m>=1 and lam>0, got m={m}, lam={lam}")
    if k > m * b:
        raise InvalidParams(f"k>m·b (k={k}, m·b={m * b}): no hash can fit")
    seed &= MASK64
    r = max(1, math.ceil(k / lam))
    bucket = _bucket_of(users, seed, r)
    members = [users[bucket == i] for i in range(r)]
    order = sorted(range(r), key=lambda i: (-len(members[i]), i))

    load = np.zeros(b, dtype=np.int64)
    disp = [0] * r
    prefixes = _prefixes(seed, 1, np.arange(64))
    for i in order:
        keys = members[i]
        if not len(keys):
            break  # the rest are empty too; they keep displacement 0
        d0, width = 0, 64
        while True:
            hi = min(d0 + width, max_displacement + 1)
            if hi <= d0:
                raise BuildExhausted(
                    f"bucket {i} ({len(keys)} users) found no displacement <= {max_displacement}"
                )
            if hi > len(prefixes):
                prefixes = _prefixes(seed, 1, np.arange(max(hi, 2 * len(prefixes))))
            slots = _slots(keys, prefixes[d0:hi], b)
            j = _first_fit(slots, load, m)
            if j >= 0:
                disp[i] = d0 + j
                np.add.at(load, slots[j], 1)
                break
            d0, width = hi, min(width * 2, 1 << 14)
    return HashFeedback(seed, b, tuple(disp))


def phash_build_retry(
    pattern,
    b: int,
    seed: int,
    max_displacement: int = DEFAULT_MAX_DISPLACEMENT,
    lam: float = DEFAULT_LAMBDA,
    m: int = 1,
    attempts: int = DEFAULT_ATTEMPTS,
) -> HashFeedback:
    """:func:`phash_build` with fresh seeds ``mix(seed + a)`` after each exhaustion."""
    last = None
    for a in range(attempts):
        s = seed if a == 0 else mix((seed + a) & MASK64)
        try:
            return phash_build(pattern, b, s, max_displacement, lam, m)
        except BuildExhausted as exc:
            last = exc
    raise BuildExhausted(f"{attempts} seeds exhausted; last: {last}")


def phash_eval(feedback: HashFeedback, user: int) -> int:
    r = feedback.bucket_count
    d = feedback.displacements[hash_user(user, feedback.seed, 0, 0) % r]
    return hash_user(user, feedback.seed, 1, d) % feedback.b


def phash_eval_many(feedback: HashFeedback, users) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    bucket = _bucket_of(users, feedback.seed, feedback.bucket_count)
    d = np.asarray(feedback.displacements, dtype=np.int64)[bucket]
    h = _mix_np(_prefixes(feedback.seed, 1, d) ^ users.astype(np.uint64))
    return (h % np.uint64(feedback.b)).astype(np.int64)


# ---------------------------------------------------------------------------
# wire format


def _class_of(d: int) -> int:
    return (d + 1).bit_length() - 1


def serialize_feedback(fb: HashFeedback) -> bytes:
    classes = [_class_of(d) for d in fb.displacements]
    L = max(classes) + 1
    weights: dict[int, int] = {}
    for c in classes:
        weights[c] = weights.get(c, 0) + 1
    lengths = huffman_lengths(weights)
    words = canonical_codewords(lengths)
    table = bytes(lengths.get(c, 0) for c in range(L))
    bits = []
    for d, c in zip(fb.displacements, classes):
        bits.append(words[c])
        if c:
            bits.append(format((d + 1) - (1 << c), f"0{c}b"))
    stream_bits = "".join(bits)
    nbytes = (len(stream_bits) + 7) // 8
    body = int(stream_bits.ljust(8 * nbytes, "0"), 2).to_bytes(nbytes, "big") if nbytes else b""
    return _HEADER.pack(fb.seed, fb.b, fb.bucket_count, L - 1) + table + body


def parse_feedback(blob: bytes) -> HashFeedback:
    blob = bytes(blob)
    if len(blob) < _HEADER.size:
        raise MalformedFile(f"feedback too short ({len(blob)} bytes)")
    seed, b, r, top = _HEADER.unpack_from(blob)
    L = top + 1
    pos = _HEADER.size
    if len(blob) < pos + L:
        raise MalformedFile("truncated codebook")
    table = blob[pos : pos + L]
    body = blob[pos + L :]
    lengths = {c: ln for c, ln in enumerate(table) if ln}
    if not lengths:
        words = {L - 1: ""}
    else:
        if sum(2.0 ** -ln for ln in lengths.values()) > 1:
            raise MalformedFile("codebook violates the Kraft inequality")
        words = canonical_codewords(lengths)
    lookup = {w: c for c, w in words.items()}
    bits = "".join(format(x, "08b") for x in body)
    disp, i = [], 0
    for _ in range(r):
        cur = ""
        while cur not in lookup:
            if i >= len(bits) or len(cur) > 255:
                raise MalformedFile("bitstream ends inside a codeword")
            cur += bits[i]
            i += 1
        c = lookup[cur]
        if i + c > len(bits):
            raise MalformedFile("bitstream ends inside extra bits")
        extra = int(bits[i : i + c], 2) if c else 0
        i += c
        disp.append((1 << c) + extra - 1)
    if len(bits) - i >= 8 or bits[i:].strip("0"):
        raise MalformedFile("trailing data after the coded displacements")
    try:
        return HashFeedback(seed, b, tuple(disp))
    except InvalidParams as exc:
        raise MalformedFile(str(exc)) from exc


# ---------------------------------------------------------------------------
# rate experiment


class PhashRateReport(NamedTuple):
    n: int
    k: int
    b: int
    trials: int
    mean_bits_per_key: float
    std_bits_per_key: float
    min_bits_per_key: float
    median_bits_per_key: float
    max_bits_per_key: float
    identification_bits: float  # informational: log2(n/b) per user, not modelled


def phash_rate_experiment(
    n: int,
    k: int,
    b: int,
    trials: int,
    seed: int,
    lam: float = DEFAULT_LAMBDA,
    max_displacement: int = DEFAULT_MAX_DISPLACEMENT,
    workers: int = 1,
) -> PhashRateReport:
    """Feedback bits per active user over uniformly drawn activity patterns.

    Trial ``i`` draws its pattern and build seed from stream ``(seed, i)``, so
    results do not depend on ``workers``.
    """
    if trials < 1:
        raise EmptyExperiment("trials=0: nothing to average")
    if not 1 <= k <= n:
        raise InvalidParams(f"need 1 <= k <= n, got k={k}, n={n}")

    def one(i: int) -> float:
        gen = stream(seed, i)
        pattern = sample_subsets(gen, n, k, 1)[0]
        build_seed = int(gen.integers(0, 1 << 63))
        fb = phash_build_retry(pattern, b, build_seed, max_displacement, lam)
        return fb.bit_length / k

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rates = np.array(list(pool.map(one, range(trials))))
    else:
        rates = np.array([one(i) for i in range(trials)])
    return PhashRateReport(
        n,
        k,
        b,
        trials,
        float(rates.mean()),
        float(rates.std(ddof=1)) if trials > 1 else 0.0,
        float(rates.min()),
        float(np.median(rates)),
        float(rates.max()),
        max(0.0, math.log2(n / b)),
    )
