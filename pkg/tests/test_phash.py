import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfsched.errors import BuildExhausted, EmptyExperiment, InvalidParams, MalformedFile
from cfsched.phash import (
    HashFeedback,
    hash_user,
    mix,
    parse_feedback,
    phash_build,
    phash_build_retry,
    phash_eval,
    phash_eval_many,
    phash_rate_experiment,
    serialize_feedback,
)
from cfsched.rng import sample_subsets, stream

GOLDEN_PATTERN = list(range(5, 145, 7))
GOLDEN_SEED = 0xDEADBEEFCAFEF00D
GOLDEN_BLOB = "0df0fecaefbeadde1800000004000000060200000002020213f186"
GOLDEN_SLOTS = [10, 11, 1, 22, 7, 20, 3, 12, 13, 8, 6, 21, 14, 18, 23, 2, 0, 9, 17, 15]


def test_mix_reference_values():
    # splitmix64 stream seeded with 0 starts 0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4
    assert mix(0) == 0xE220A8397B1DCDAF
    assert mix(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


class TestGolden:
    def test_build_bytes(self):
        fb = phash_build(GOLDEN_PATTERN, 24, GOLDEN_SEED)
        assert fb.displacements == (0, 18, 112, 34)
        assert fb.blob.hex() == GOLDEN_BLOB

    def test_slots_from_bytes(self):
        fb = parse_feedback(bytes.fromhex(GOLDEN_BLOB))
        assert [phash_eval(fb, u) for u in GOLDEN_PATTERN] == GOLDEN_SLOTS
        assert phash_eval_many(fb, GOLDEN_PATTERN).tolist() == GOLDEN_SLOTS

    def test_single_class_blob(self):
        # one bucket, displacement 6: class 2 is the only class, so its codeword is empty
        fb = phash_build([3, 10, 17, 40, 99], 8, 42)
        assert fb.blob.hex() == "2a00000000000000080000000100000002000000c0"
        assert fb.bit_length == 8 * 21


class TestBuild:
    def test_single_user(self):
        for b in (1, 2, 7):
            fb = phash_build([5], b, 3)
            assert fb.bucket_count == 1 and fb.displacements == (0,)

    def test_injective_1000_builds(self):
        gen = stream(2024)
        pats = sample_subsets(gen, 10**6, 64, 1000)
        seeds = gen.integers(0, 1 << 63, size=1000)
        for users, s in zip(pats, seeds):
            fb = phash_build_retry(users, 64, int(s))
            slots = phash_eval_many(parse_feedback(fb.blob), users)
            assert len(set(slots.tolist())) == 64

    def test_deterministic(self):
        a = phash_build(GOLDEN_PATTERN, 30, 1)
        b = phash_build(GOLDEN_PATTERN, 30, 1)
        assert a.blob == b.blob
        assert phash_build(GOLDEN_PATTERN, 30, 2).blob != a.blob

    def test_capacity_m(self):
        users = list(range(0, 400, 10))
        fb = phash_build(users, 20, 9, m=2)
        counts = np.bincount(phash_eval_many(fb, users), minlength=20)
        assert counts.max() <= 2

    def test_exhausted(self):
        with pytest.raises(BuildExhausted):
            phash_build(list(range(64)), 64, 1, max_displacement=0)
        fb = phash_build_retry(list(range(64)), 64, 1)
        assert len(set(phash_eval_many(fb, range(64)).tolist())) == 64

    def test_preconditions(self):
        with pytest.raises(InvalidParams):
            phash_build([], 4, 1)
        with pytest.raises(InvalidParams):
            phash_build([1, 2, 3], 2, 1)
        with pytest.raises(InvalidParams):
            phash_build([1, 1], 4, 1)

    def test_locality(self):
        users = list(range(0, 300, 3))
        fb = phash_build(users, 120, 77)
        r = fb.bucket_count
        bucket = {u: hash_user(u, fb.seed, 0, 0) % r for u in users}
        disp = list(fb.displacements)
        disp[0] += 1
        moved = HashFeedback(fb.seed, fb.b, tuple(disp))
        for u in users:
            if bucket[u] != 0:
                assert phash_eval(moved, u) == phash_eval(fb, u)


@given(
    st.sets(st.integers(0, 2**40), min_size=1, max_size=80),
    st.floats(1.0, 3.0),
    st.integers(0, 2**64 - 1),
    st.sampled_from([1.0, 3.0, 5.0, 8.0]),
)
@settings(max_examples=60, deadline=None)
def test_round_trip_and_perfectness(users, beta, seed, lam):
    users = sorted(users)
    b = math.ceil(beta * len(users))
    fb = phash_build(users, b, seed, lam=lam)
    heard = parse_feedback(fb.blob)
    assert heard == fb
    assert serialize_feedback(heard) == fb.blob
    slots = [phash_eval(heard, u) for u in users]
    assert len(set(slots)) == len(users) and all(0 <= s < b for s in slots)
    assert phash_eval_many(heard, users).tolist() == slots


class TestWire:
    def test_truncated(self):
        blob = bytes.fromhex(GOLDEN_BLOB)
        for cut in (0, 5, 17, 20, len(blob) - 1):
            with pytest.raises(MalformedFile):
                parse_feedback(blob[:cut])

    def test_trailing(self):
        with pytest.raises(MalformedFile):
            parse_feedback(bytes.fromhex(GOLDEN_BLOB) + b"\x00")

    def test_nonzero_padding(self):
        blob = bytearray(bytes.fromhex("2a00000000000000080000000100000002000000c0"))
        blob[-1] |= 0x01
        with pytest.raises(MalformedFile):
            parse_feedback(bytes(blob))

    def test_bad_kraft(self):
        blob = bytearray(bytes.fromhex(GOLDEN_BLOB))
        blob[17:20] = bytes([1, 1, 1])
        with pytest.raises(MalformedFile):
            parse_feedback(bytes(blob))


class TestRate:
    def test_empty(self):
        with pytest.raises(EmptyExperiment):
            phash_rate_experiment(100, 10, 10, 0, 1)

    def test_ordering_and_ceilings(self):
        k = 1 << 10
        rate = {beta: phash_rate_experiment(10**6, k, math.ceil(beta * k), 8, 5).mean_bits_per_key for beta in (1, 1.23, 2)}
        assert rate[2] < rate[1.23] < rate[1]
        assert rate[1] <= 3.5 and rate[2] <= 1.5

    def test_large_k(self):
        rep = phash_rate_experiment(10**7, 10**4, 2 * 10**4, 20, 8, workers=4)
        assert rep.mean_bits_per_key <= 1.5

    def test_workers_do_not_change_results(self):
        a = phash_rate_experiment(10**5, 100, 130, 6, 3, workers=1)
        b = phash_rate_experiment(10**5, 100, 130, 6, 3, workers=3)
        assert a == b
        assert a.identification_bits == pytest.approx(math.log2(10**5 / 130))
