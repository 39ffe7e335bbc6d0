"""Acceptance criteria, one check per criterion.

Each check returns (passed, detail). Under pytest the outcome is recorded and
printed as a single PASS/FAIL line in the terminal summary; run this file
directly to get the same lines without pytest.
"""

import math
import sys
import time
from fractions import Fraction

import numpy as np

from cfsched import bounds
from cfsched.codes import (
    average_length,
    build_verified_family,
    huffman_build,
    random_family,
    required_T,
    twouser_var_distribution,
)
from cfsched.core import CodeParams
from cfsched.covering import family_covers_all, minimal_family_size
from cfsched.phash import parse_feedback, phash_build_retry, phash_eval_many, phash_rate_experiment
from cfsched.rng import sample_subsets, stream
from cfsched.sim import empirical_vs_eq25, run_trials

RESULTS: dict[int, tuple[bool, str, float]] = {}

LOG2E = 1 / math.log(2)


def check_1():
    bad = []
    for n in (2, 4, 8, 16, 32, 64):
        dist = twouser_var_distribution(n)
        avg = average_length(huffman_build(dist), dist)
        target = 2 - Fraction(int(math.log2(n)) + 1, n - 1)
        if not isinstance(avg, Fraction) or avg != target:
            bad.append((n, avg, target))
    n8 = average_length(huffman_build(twouser_var_distribution(8)), twouser_var_distribution(8))
    return not bad and n8 == Fraction(10, 7), f"n=8 -> {n8}; mismatches={bad}"


def check_2():
    a = bounds.tradeoff_fixed_achieve(10**6, 1000, 1000)
    b = bounds.tradeoff_fixed_achieve(10**6, 2000, 1000)
    ok = 1455.6 <= a <= 1457.6 and 455.6 <= b <= 457.6 and abs((a - b) - 1000.0) <= 0.01
    return ok, f"b=k: {a:.4f}, b=2k: {b:.4f}, diff {a - b:.6f}"


def check_3():
    r = {beta: bounds.random_coding_bits_per_key(beta) for beta in (1.0, 1.23, 2.0)}
    ok = (
        abs(r[1.0] - 1.4427) < 5e-5
        and abs(r[1.23] - 0.886) <= 0.005
        and abs(r[2.0] - 0.4427) <= 0.0005
        and [f"{r[x]:.2f}" for x in (1.0, 1.23, 2.0)] == ["1.44", "0.89", "0.44"]
    )
    return ok, ", ".join(f"beta={k}: {v:.4f}" for k, v in r.items())


def check_4():
    parts, ok = [], True
    for n, expected in ((4, 2), (8, 3)):
        t = minimal_family_size(CodeParams(n, 2, 2)).T
        lo = max(bounds.fixed_converse_volume(n, 2), bounds.fixed_converse_loglog(n, 2))
        hi = bounds.fixed_achieve(n, 2)
        lt = math.log2(t)
        ok &= t == expected and lo <= lt + 1e-9 and lt <= hi
        parts.append(f"n={n}: T*={t}, {lo:.3f} <= {lt:.3f} <= {hi:.3f}")
    return ok, "; ".join(parts)


def check_5():
    params = CodeParams(8, 3, 3)
    T = required_T(params, 0.5)
    hits = sum(family_covers_all(random_family(params, T, seed), params) for seed in range(200))
    return hits >= 80, f"T={T}, {hits}/200 families cover every pattern"


def check_6():
    tab = empirical_vs_eq25(12, 3, 3, 100_000, seed=0)
    ok = abs(tab.p - 6 / 27) < 1e-12 and tab.max_abs_z < 3 and tab.tv_distance < 0.01
    return ok, f"T={tab.T}, max|z|={tab.max_abs_z:.2f}, TV={tab.tv_distance:.4f}"


def check_7():
    params = CodeParams(10, 3, 3)
    fam = build_verified_family(params, seed=0).family
    rep = run_trials("family", params, 100_000, seed=1, family=fam)
    ok = rep.collision_events == 0 and rep.uncovered_events == 0
    return ok, f"T={fam.T}, collisions={rep.collision_events}, uncovered={rep.uncovered_events}"


def check_8():
    parts, ok = [], True
    for n, k in ((8, 2), (10, 2), (9, 3)):
        params = CodeParams(n, k, k)
        fam = build_verified_family(params, seed=0).family
        rep = run_trials("family", params, 100_000, seed=1, family=fam)
        floor = bounds.var_converse_volume(n, k) - 0.05
        ok &= rep.empirical_entropy_bits >= floor
        parts.append(f"({n},{k}): H={rep.empirical_entropy_bits:.3f} >= {floor:.3f}")
    return ok, "; ".join(parts)


def check_9():
    gen = stream(64)
    pats = sample_subsets(gen, 10**6, 64, 1000)
    seeds = gen.integers(0, 1 << 63, size=1000)
    injective = 0
    for users, s in zip(pats, seeds):
        fb = parse_feedback(phash_build_retry(users, 64, int(s)).blob)
        injective += len(np.unique(phash_eval_many(fb, users))) == 64
    k = 1 << 10
    rate = {
        beta: phash_rate_experiment(10**6, k, math.ceil(beta * k), 10, 9).mean_bits_per_key
        for beta in (1.0, 1.23, 2.0)
    }
    ok = injective == 1000 and rate[1.0] <= 3.5 and rate[2.0] <= 1.5 and rate[2.0] < rate[1.23] < rate[1.0]
    rates = ", ".join(f"b={b}k: {v:.3f}" for b, v in rate.items())
    return ok, f"{injective}/1000 injective; bits/key {rates}"


def check_10():
    n, k = 10**6, 1000
    c = (bounds.multislot_fixed_achieve(n, k, 1) - math.log2(math.log(n / k) + 1)) / k
    ref = 0.5 * math.log2(2 * math.pi) + LOG2E / 12
    ok = abs(c - ref) < 1e-6 and abs(c - LOG2E) < 0.004
    return ok, f"coefficient {c:.7f}, reference {ref:.7f}, gap to log2 e {c - LOG2E:.5f}"


CRITERIA = {
    1: ("two-user Huffman rate exact", check_1, 1),
    2: ("tradeoff anchors 1457/457", check_2, 1),
    3: ("random-coding bits per key", check_3, 1),
    4: ("exact T* and bound sandwich", check_4, 30),
    5: ("random family coverage rate", check_5, 60),
    6: ("greedy index geometric law", check_6, 60),
    7: ("certified family collision-free", check_7, 60),
    8: ("entropy above volume converse", check_8, 120),
    9: ("perfect hash pipeline", check_9, 120),
    10: ("multi-slot coefficient", check_10, 1),
}


def evaluate(i):
    name, fn, _ = CRITERIA[i]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    RESULTS[i] = (ok, detail, elapsed)
    return ok, detail, elapsed


def summary_lines():
    lines = []
    for i in sorted(RESULTS):
        ok, detail, elapsed = RESULTS[i]
        name, _, limit = CRITERIA[i]
        tag = "PASS" if ok else "FAIL"
        lines.append(f"[{tag}] criterion {i:2d} {name}: {detail} ({elapsed:.2f}s, limit {limit}s)")
    return lines


def _make_test(i):
    def test():
        ok, detail, elapsed = evaluate(i)
        assert ok, detail
        # generous slack for loaded CI machines; the summary line shows the real time
        assert elapsed < 5 * CRITERIA[i][2], f"took {elapsed:.1f}s"

    test.__name__ = f"test_criterion_{i}"
    return test


for _i in CRITERIA:
    globals()[f"test_criterion_{_i}"] = _make_test(_i)


if __name__ == "__main__":
    for i in CRITERIA:
        evaluate(i)
    print("\n".join(summary_lines()))
    sys.exit(0 if all(r[0] for r in RESULTS.values()) else 1)
