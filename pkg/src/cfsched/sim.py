"""Monte Carlo harness: sample activity, encode, decode per user, check the schedule.

Trials run in blocks of ``BLOCK`` patterns; block ``j`` draws everything from
stream ``(seed, j)`` and blocks are merged by exact integer summation, so a
report depends on ``seed`` and ``trials`` only, never on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from cfsched.codes import (
    cover_probability,
    greedy_encode_batch,
    huffman_lengths,
    naive_decode,
    naive_encode,
    naive_rate,
    required_T,
    twouser_decode,
    twouser_fixed_bits,
    twouser_fixed_encode,
)
from cfsched.core import ActivityPattern, CodeParams, PartitionFamily
from cfsched.errors import BuildExhausted, DimensionMismatch, EmptyExperiment, InvalidParams
from cfsched.phash import parse_feedback, phash_build_retry, phash_eval_many
from cfsched.rng import sample_subsets, stream

BLOCK = 4096
DEFAULT_TRIALS = 100_000
REPORT_VERSION = 1
CODES = ("naive", "twouser", "family", "phash")


def sample_pattern(n: int, k: int, seed: int, prior: Sequence[float] | None = None) -> ActivityPattern:
    """One activity pattern; uniform over k-subsets unless ``prior`` weights are given.

    A weighted prior draws users one at a time without replacement, each with
    probability proportional to its weight among those left.
    """
    if not 1 <= k <= n:
        raise InvalidParams(f"need 1 <= k <= n, got k={k}, n={n}")
    gen = stream(seed)
    if prior is None:
        return ActivityPattern(tuple(sample_subsets(gen, n, k, 1)[0].tolist()), n)
    w = np.asarray(prior, dtype=float)
    if w.shape != (n,) or (w < 0).any() or np.count_nonzero(w) < k:
        raise InvalidParams("prior needs n non-negative weights with at least k positive")
    users = gen.choice(n, size=k, replace=False, p=w / w.sum())
    return ActivityPattern(tuple(users.tolist()), n)


@dataclass
class TrialReport:
    code: str
    n: int
    k: int
    b: int
    m: int
    trials: int
    seed: int
    collision_events: int
    uncovered_events: int
    mean_fixed_bits: float
    empirical_entropy_bits: float | None
    huffman_rate_bits: float | None
    frequencies: dict = field(default_factory=dict)

    @property
    def huffman_gap(self) -> float | None:
        if self.huffman_rate_bits is None:
            return None
        return self.huffman_rate_bits - self.empirical_entropy_bits

    def to_dict(self) -> dict:
        out = {"format_version": REPORT_VERSION}
        out.update(asdict(self))
        out["frequencies"] = {str(s): c for s, c in self.frequencies.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        scalars = {k: v for k, v in self.to_dict().items() if k != "frequencies"}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*scalars, "symbol", "count"])
        row = ["" if v is None else v for v in scalars.values()]
        for sym, c in sorted(self.frequencies.items(), key=lambda kv: str(kv[0])):
            w.writerow([*row, sym, c])
        if not self.frequencies:
            w.writerow([*row, "", ""])
        return buf.getvalue()


def _collisions(slots: np.ndarray, m: int) -> np.ndarray:
    """Per row: does some slot receive more than m users?"""
    if slots.shape[1] <= m:
        return np.zeros(len(slots), dtype=bool)
    s = np.sort(slots, axis=1)
    return np.any(s[:, m:] == s[:, :-m], axis=1)


class _Block(NamedTuple):
    collisions: int
    uncovered: int
    fixed_bits: int
    symbols: Counter


def _run_block(code, params, family, gen, count, lam) -> _Block:
    n, k, m = params.n, params.k, params.m
    patterns = sample_subsets(gen, n, k, count)
    symbols: Counter = Counter()
    collisions = uncovered = fixed_bits = 0

    if code == "family":
        idx = greedy_encode_batch(family, patterns, m)
        ok = idx >= 0
        uncovered = int((~ok).sum())
        slots = family.matrix[idx[ok][:, None], patterns[ok]]
        collisions = int(_collisions(slots, m).sum())
        for t, c in zip(*np.unique(idx[ok], return_counts=True)):
            symbols[int(t)] = int(c)
        return _Block(collisions, uncovered, 0, symbols)

    if code == "phash":
        build_seeds = gen.integers(0, 1 << 63, size=count)
        for users, s in zip(patterns, build_seeds):
            try:
                fb = phash_build_retry(users, params.b, int(s), lam=lam, m=m)
            except BuildExhausted:
                uncovered += 1
                continue
            heard = parse_feedback(fb.blob)
            slots = phash_eval_many(heard, users)[None, :]
            collisions += int(_collisions(slots, m)[0])
            fixed_bits += fb.bit_length
        return _Block(collisions, uncovered, fixed_bits, symbols)

    for row in patterns:
        users = tuple(row.tolist())
        if code == "naive":
            msg = naive_encode(users, params)
            slots = [naive_decode(msg, u, n) for u in users]
            symbols[msg] += 1
        else:
            t = twouser_fixed_encode(users, n)
            slots = [twouser_decode(t, u, n) for u in users]
            symbols[t] += 1
        collisions += int(_collisions(np.asarray([slots]), m)[0])
    return _Block(collisions, uncovered, 0, symbols)


def run_trials(
    code: str,
    params: CodeParams,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    family: PartitionFamily | None = None,
    workers: int = 1,
    lam: float = 5.0,
) -> TrialReport:
    """Simulate ``trials`` rounds of the three-phase protocol with one feedback code.

    Uncovered patterns (and exhausted hash builds) are counted as outages and
    left out of the rate averages. Variable rates are measured in two passes:
    collect symbol frequencies, then Huffman code them.
    """
    if code not in CODES:
        raise InvalidParams(f"unknown code {code!r}; choose from {', '.join(CODES)}")
    if trials < 1:
        raise EmptyExperiment("trials must be positive")
    if code == "family":
        if family is None:
            raise InvalidParams("code 'family' needs a partition family")
        if family.n != params.n or family.b != params.b:
            raise DimensionMismatch(
                f"family is (n={family.n}, b={family.b}), instance is (n={params.n}, b={params.b})"
            )
    if code == "twouser" and (params.k != 2 or params.b < 2 or params.m != 1):
        raise InvalidParams("the two-user code needs k=2, b>=2, m=1")
    if code == "naive" and (params.m != 1 or params.b < params.k):
        raise InvalidParams("the listing code needs m=1 and b>=k")

    sizes = [min(BLOCK, trials - j * BLOCK) for j in range(math.ceil(trials / BLOCK))]
    jobs = [(code, params, family, stream(seed, j), c, lam) for j, c in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda a: _run_block(*a), jobs))
    else:
        blocks = [_run_block(*a) for a in jobs]

    collisions = sum(bl.collisions for bl in blocks)
    uncovered = sum(bl.uncovered for bl in blocks)
    symbols: Counter = Counter()
    for bl in blocks:
        symbols.update(bl.symbols)
    served = trials - uncovered

    if code == "naive":
        fixed = float(naive_rate(params.n, params.k))
    elif code == "twouser":
        fixed = float(twouser_fixed_bits(params.n))
    elif code == "family":
        fixed = float(math.ceil(math.log2(family.T)))
    else:
        fixed = sum(bl.fixed_bits for bl in blocks) / served if served else math.nan

    entropy = huffman = None
    if symbols:
        counts = np.array(list(symbols.values()), dtype=float)
        p = counts / counts.sum()
        entropy = float(-(p * np.log2(p)).sum())
        lengths = huffman_lengths(dict(enumerate(symbols.values())))
        huffman = float(sum(lengths[i] * c for i, c in enumerate(symbols.values())) / counts.sum())
    return TrialReport(
        code, params.n, params.k, params.b, params.m, trials, seed,
        collisions, uncovered, fixed, entropy, huffman, dict(symbols),
    )


# ---------------------------------------------------------------------------
# greedy index law of random families


class Eq25Row(NamedTuple):
    t: int  # 1-based greedy index
    count: int
    empirical: float
    predicted: float
    stderr: float
    z: float


class Eq25Table(NamedTuple):
    n: int
    k: int
    b: int
    m: int
    T: int
    families: int
    p: float
    rows: list
    uncovered: int
    predicted_uncovered: float
    tv_distance: float

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z) for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "count", "empirical", "predicted", "stderr", "z"])
        for r in self.rows:
            w.writerow([r.t, r.count, repr(r.empirical), repr(r.predicted), repr(r.stderr), repr(r.z)])
        w.writerow(["inf", self.uncovered, repr(self.uncovered / self.families), repr(self.predicted_uncovered), "", ""])
        return buf.getvalue()


def empirical_vs_eq25(
    n: int,
    k: int,
    b: int,
    families: int,
    seed: int,
    m: int = 1,
    T: int | None = None,
    pattern: Sequence[int] | None = None,
    workers: int = 1,
) -> Eq25Table:
    """Greedy index of one fixed pattern over many fresh random families.

    Each family has ``T`` i.i.d. uniform partitions (default: the size that
    certifies coverage with probability 1/2). The index is geometric with
    success probability p, the chance one partition covers the pattern, and
    the mass beyond ``T`` is the uncovered event.
    """
    if families < 1:
        raise EmptyExperiment("families must be positive")
    params = CodeParams(n, k, b, m)
    users = np.asarray(sorted(pattern) if pattern is not None else range(k), dtype=np.int64)
    if len(users) != k or users[0] < 0 or users[-1] >= n or len(set(users.tolist())) != k:
        raise InvalidParams("pattern must hold k distinct users in [0, n)")
    T = T if T is not None else required_T(params, 0.5)
    p = float(cover_probability(params))

    def block(j: int, count: int) -> np.ndarray:
        # full n-user families; only the pattern's columns decide the index
        fam = stream(seed, j).integers(0, b, size=(count, T, n), dtype=np.int64)
        slots = np.sort(fam[:, :, users], axis=-1)
        ok = np.ones(slots.shape[:2], dtype=bool) if k <= m else ~np.any(slots[..., m:] == slots[..., :-m], axis=-1)
        first = np.where(ok.any(axis=1), ok.argmax(axis=1), T)
        return np.bincount(first, minlength=T + 1)

    sizes = [min(BLOCK, families - j * BLOCK) for j in range(math.ceil(families / BLOCK))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: block(*a), enumerate(sizes)))
    else:
        parts = [block(j, c) for j, c in enumerate(sizes)]
    counts = np.sum(parts, axis=0)

    rows, tv = [], 0.0
    for t in range(1, T + 1):
        q = p * (1 - p) ** (t - 1)
        emp = counts[t - 1] / families
        se = math.sqrt(q * (1 - q) / families)
        rows.append(Eq25Row(t, int(counts[t - 1]), float(emp), q, se, float(emp - q) / se if se else 0.0))
        tv += abs(emp - q)
    tail = (1 - p) ** T
    tv = 0.5 * (tv + abs(counts[T] / families - tail))
    return Eq25Table(n, k, b, m, T, families, p, rows, int(counts[T]), tail, tv)
