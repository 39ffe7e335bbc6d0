import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cfsched.bounds import fixed_achieve_exact
from cfsched.codes import (
    SymbolDistribution,
    average_length,
    build_verified_family,
    cover_count_assignments,
    cover_probability,
    decode,
    encoder_output_distribution,
    greedy_encode,
    greedy_encode_batch,
    huffman_build,
    huffman_lengths,
    local_search_min_entropy,
    naive_decode,
    naive_encode,
    naive_rate,
    random_family,
    required_T,
    twouser_decode,
    twouser_family,
    twouser_fixed_bits,
    twouser_fixed_encode,
    twouser_var_distribution,
    twouser_var_rate,
)
from cfsched.core import CodeParams, PartitionFamily
from cfsched.covering import family_covers_all
from cfsched.errors import (
    BuildFailed,
    EmptyDistribution,
    InvalidEpsilon,
    InvalidParams,
    NotPowerOfTwo,
    Uncovered,
    UserNotListed,
)
from cfsched.rng import stream

TWO = PartitionFamily.from_matrix([[0, 0, 1, 1], [0, 1, 0, 1]], 2)
ONE = PartitionFamily.from_matrix([[0, 0, 1, 1]], 2)


class TestNaive:
    def test_rate(self):
        assert naive_rate(10**6, 1000) == 20000

    def test_round_trip(self):
        params = CodeParams(16, 3, 3)
        msg = naive_encode((9, 2, 14), params)
        assert msg == "0010" "1001" "1110"
        assert [naive_decode(msg, u, 16) for u in (2, 9, 14)] == [0, 1, 2]
        with pytest.raises(UserNotListed):
            naive_decode(msg, 3, 16)


class TestTwoUser:
    def test_examples(self):
        assert twouser_fixed_encode((3, 5), 8) == 1
        assert twouser_decode(1, 3, 8) == 0 and twouser_decode(1, 5, 8) == 1
        assert twouser_fixed_encode((2, 3), 4) == 2

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 8, 9, 16, 17, 1000, 10**6])
    def test_fixed_bits(self, n):
        assert twouser_fixed_bits(n) == math.ceil(math.log2(math.ceil(math.log2(n))))

    @pytest.mark.parametrize("n", [2, 4, 5, 8, 13, 16])
    def test_matches_msb_oracle_and_splits(self, n):
        for a, b in itertools.combinations(range(n), 2):
            t = twouser_fixed_encode((a, b), n)
            assert t == oracles.msb_position(a, b, n)
            assert twouser_decode(t, a, n) != twouser_decode(t, b, n)

    def test_distribution(self):
        assert twouser_var_distribution(4).probs == (Fraction(2, 3), Fraction(1, 3))
        assert twouser_var_distribution(8).probs == (Fraction(4, 7), Fraction(2, 7), Fraction(1, 7))
        for n in (4, 8, 16, 32):
            assert list(twouser_var_distribution(n).probs) == oracles.twouser_distribution(n)

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64])
    def test_huffman_rate_exact(self, n):
        dist = twouser_var_distribution(n)
        got = average_length(huffman_build(dist), dist)
        assert isinstance(got, (Fraction, int))
        assert got == twouser_var_rate(n) == 2 - Fraction(int(math.log2(n)) + 1, n - 1)
        assert got == oracles.huffman_average(dist.probs)

    def test_rate_examples(self):
        assert twouser_var_rate(4) == 1
        assert twouser_var_rate(8) == Fraction(10, 7)
        assert twouser_var_rate(16) == Fraction(5, 3)
        assert sorted(huffman_build(twouser_var_distribution(8)).lengths.values()) == [1, 2, 2]
        assert sorted(huffman_build(twouser_var_distribution(16)).lengths.values()) == [1, 2, 3, 3]

    def test_not_power_of_two(self):
        with pytest.raises(NotPowerOfTwo):
            twouser_var_rate(12)

    def test_family_view(self):
        fam = twouser_family(8)
        assert fam.T == 3 and family_covers_all(fam, CodeParams(8, 2, 2))


positive = st.lists(st.integers(1, 1000), min_size=1, max_size=30)


class TestHuffman:
    @given(positive)
    def test_bounds_and_prefix(self, weights):
        total = sum(weights)
        dist = SymbolDistribution(tuple(Fraction(w, total) for w in weights))
        code = huffman_build(dist)
        L = average_length(code, dist)
        H = dist.entropy()
        assert H - 1e-9 <= L < H + 1
        assert code.is_prefix_free()
        assert code.kraft_sum() == 1  # a lone symbol gets the empty word, 2^0
        assert L == oracles.huffman_average(dist.probs)

    @given(positive, st.lists(st.integers(0, 29), max_size=50))
    def test_encode_decode(self, weights, msg):
        if len(weights) < 2:
            return
        code = huffman_build(tuple(Fraction(w, sum(weights)) for w in weights))
        msg = [s % len(weights) for s in msg]
        assert code.decode(code.encode(msg)) == msg

    def test_single_symbol(self):
        assert huffman_lengths({3: 5}) == {3: 0}

    def test_empty(self):
        with pytest.raises(EmptyDistribution):
            huffman_lengths({0: 0})

    def test_zero_mass_symbols_skipped(self):
        code = huffman_build((Fraction(1, 2), 0, Fraction(1, 2)))
        assert set(code.codewords) == {0, 2}

    def test_distribution_validation(self):
        with pytest.raises(InvalidParams):
            SymbolDistribution((0.7, 0.7))
        assert SymbolDistribution((Fraction(1, 3),)).residual == Fraction(2, 3)


class TestRandomFamilies:
    @pytest.mark.parametrize("b, k, m", [(3, 3, 1), (4, 3, 1), (2, 4, 2), (3, 5, 2), (2, 3, 2), (5, 2, 1), (3, 6, 2)])
    def test_cover_count_brute(self, b, k, m):
        assert cover_count_assignments(b, k, m) == oracles.cover_count_assignments(b, k, m)

    def test_cover_probability(self):
        assert cover_probability(CodeParams(12, 3, 3)) == Fraction(6, 27)
        assert cover_probability(CodeParams(12, 3, 4)) == Fraction(24, 64)
        # k = m b: k!/(b^k m!^b)
        assert cover_probability(CodeParams(12, 4, 2, 2)) == Fraction(math.factorial(4), 2**4 * 2**2)

    @pytest.mark.parametrize("b, expected", [(3, 6 / 27), (4, 0.375)])
    def test_cover_probability_monte_carlo(self, b, expected):
        rows = stream(11, b).integers(0, b, size=(100_000, 12))
        hit = (np.sort(rows[:, :3], axis=1)[:, 1:] != np.sort(rows[:, :3], axis=1)[:, :-1]).all(axis=1)
        assert abs(hit.mean() - expected) < 0.01

    def test_required_T(self):
        assert required_T(CodeParams(4, 2, 2), 0.5) == 5 == math.ceil(math.log(12) * 2)
        assert required_T(CodeParams(6, 2, 2), 0.5) == 7
        assert required_T(CodeParams(6, 3, 3), 0.5) == 17 == math.ceil(math.log(40) * 27 / 6)
        for eps in (0, 1, -0.1, 1.5):
            with pytest.raises(InvalidEpsilon):
                required_T(CodeParams(4, 2, 2), eps)

    def test_required_T_large(self):
        T = required_T(CodeParams(10**6, 1000, 1000), 0.9)
        assert 1449.0 < math.log2(T) < 1449.6

    def test_required_T_epsilon_to_one(self):
        for n, k, b in [(20, 3, 3), (50, 4, 6), (1000, 10, 10)]:
            T = required_T(CodeParams(n, k, b), 1 - 1e-12)
            assert abs(math.log2(T) - fixed_achieve_exact(n, k, b)) < 0.05
            assert abs(fixed_achieve_exact(n, k, b) - oracles.fixed_achieve_exact(n, k, b)) < 1e-9

    def test_random_family_reproducible(self):
        p = CodeParams(9, 3, 3)
        a, b = random_family(p, 5, 7), random_family(p, 5, 7)
        assert a == b and a != random_family(p, 5, 8)
        assert random_family(p, 5, 7, round=1) != a
        # partition t depends on (seed, round, t) only
        assert random_family(p, 3, 7).partitions == a.partitions[:3]


class TestGreedy:
    def test_examples(self):
        assert greedy_encode(TWO, (0, 2)).index == 0
        assert greedy_encode(TWO, (0, 1)).index == 1
        with pytest.raises(Uncovered) as exc:
            greedy_encode(ONE, (0, 1))
        assert exc.value.pattern == (0, 1)
        assert decode(ONE, 0, 2) == 1

    @given(st.integers(0, 10**6), st.integers(1, 8))
    @settings(max_examples=40)
    def test_minimal_index_and_injective(self, seed, T):
        params = CodeParams(7, 3, 3)
        fam = random_family(params, T, seed)
        pats = np.array(list(itertools.combinations(range(7), 3)))
        batch = greedy_encode_batch(fam, pats)
        for p, t in zip(pats, batch):
            ref = oracles.greedy_index(fam.matrix.tolist(), p)
            assert (ref if ref is not None else -1) == t
            if t >= 0:
                assert greedy_encode(fam, p).index == t
                assert len({decode(fam, int(t), int(u)) for u in p}) == 3

    def test_decode_reconstructs(self):
        for t in range(TWO.T):
            assert [decode(TWO, t, u) for u in range(4)] == list(TWO.matrix[t])


class TestBuild:
    @pytest.mark.parametrize("n, k, b, bound", [(6, 2, 2, 7), (6, 3, 3, 17), (4, 2, 4, None)])
    def test_certified_within_bound(self, n, k, b, bound):
        params = CodeParams(n, k, b)
        vf = build_verified_family(params, seed=3)
        assert family_covers_all(vf.family, params)
        assert oracles.family_covers_all(vf.family.matrix.tolist(), n, k)
        assert vf.family.T <= (bound or required_T(params, 0.5))

    def test_trim(self):
        params = CodeParams(4, 2, 4)
        vf = build_verified_family(params, seed=3, trim=True)
        assert family_covers_all(vf.family, params) and vf.family.T <= vf.T_drawn

    def test_multislot(self):
        params = CodeParams(6, 4, 2, 2)
        assert family_covers_all(build_verified_family(params, seed=1).family, params)

    def test_failure(self):
        with pytest.raises(BuildFailed):
            build_verified_family(CodeParams(8, 2, 2), seed=0, T=1, max_rounds=3)


class TestOutputLaw:
    def test_examples(self):
        assert encoder_output_distribution(TWO, CodeParams(4, 2, 2)).probs == pytest.approx((4 / 6, 2 / 6))
        single = encoder_output_distribution(ONE, CodeParams(4, 2, 2))
        assert single.probs == pytest.approx((4 / 6,)) and single.residual == pytest.approx(2 / 6)

    def test_covering_sums_to_one(self):
        params = CodeParams(7, 3, 3)
        fam = build_verified_family(params, seed=2).family
        assert sum(encoder_output_distribution(fam, params).probs) == pytest.approx(1.0)

    def test_local_search_not_worse(self):
        params = CodeParams(6, 3, 3)
        fam = build_verified_family(params, seed=4).family
        mapping, h = local_search_min_entropy(fam, params)
        assert h <= encoder_output_distribution(fam, params).entropy() + 1e-12
        for p, t in mapping.items():
            assert oracles.covers(fam.matrix[t].tolist(), p)
