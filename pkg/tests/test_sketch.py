import math
import struct
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentsketch import sketch as sk_mod
from momentsketch.errors import (
    EmptySketchError,
    IncompatibleSketchError,
    InvalidParameterError,
    InvalidSubtractionError,
    InvalidValueError,
    SketchFormatError,
)
from momentsketch.maxent import fit_sketch
from momentsketch.sketch import MomentsSketch, SketchArray, merge_all

from conftest import field_scale

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def fsum_oracle(values, order):
    """Exactly rounded sums of x^i and log(x)^i, the reference for accumulation."""
    vals = [float(v) for v in values]
    ps = [math.fsum(v ** i for v in vals) for i in range(1, order + 1)]
    ls = [math.fsum(math.log(v) ** i for v in vals if v > 0) for i in range(1, order + 1)]
    return np.array(ps), np.array(ls)


def assert_close_fields(a, b, scale_ps, scale_ls, rtol):
    assert a.count == b.count
    assert a.min == b.min and a.max == b.max
    np.testing.assert_array_less(np.abs(a.power_sums - b.power_sums), rtol * scale_ps + 1e-300)
    np.testing.assert_array_less(np.abs(a.log_sums - b.log_sums), rtol * scale_ls + 1e-300)


class TestConstruction:
    def test_new_is_empty(self):
        s = sk_mod.new(2)
        assert (s.order, s.count, s.min, s.max) == (2, 0, math.inf, -math.inf)
        np.testing.assert_array_equal(s.power_sums, [0, 0])
        np.testing.assert_array_equal(s.log_sums, [0, 0])
        assert s.is_empty

    @pytest.mark.parametrize("order", [0, 21, -3, 2.5, True])
    def test_bad_order(self, order):
        with pytest.raises(InvalidParameterError):
            MomentsSketch(order)

    def test_empty_estimate_fails(self):
        with pytest.raises(EmptySketchError):
            fit_sketch(MomentsSketch(10))

    def test_accumulate_one(self):
        s = sk_mod.accumulate(sk_mod.new(2), 1.0)
        assert (s.count, s.min, s.max) == (1, 1.0, 1.0)
        np.testing.assert_array_equal(s.power_sums, [1, 1])
        np.testing.assert_array_equal(s.log_sums, [0, 0])

    def test_accumulate_e(self):
        s = MomentsSketch(2).add(math.e)
        np.testing.assert_allclose(s.log_sums, [1, 1], rtol=1e-15)
        np.testing.assert_allclose(s.power_sums, [math.e, math.e ** 2], rtol=1e-15)

    def test_accumulate_negative_skips_logs(self):
        s = MomentsSketch(2).add(-1.0)
        assert (s.count, s.min, s.max) == (1, -1.0, -1.0)
        np.testing.assert_array_equal(s.power_sums, [-1, 1])
        np.testing.assert_array_equal(s.log_sums, [0, 0])

    def test_zero_skips_logs(self):
        s = MomentsSketch(3).add(0.0)
        np.testing.assert_array_equal(s.log_sums, [0, 0, 0])
        assert not s.log_moments_valid

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected_and_unchanged(self, bad):
        s = MomentsSketch.from_values([1.0, 2.0], 3)
        before = s.copy()
        with pytest.raises(InvalidValueError):
            s.add(bad)
        with pytest.raises(InvalidValueError):
            s.add_many([3.0, bad])
        assert s == before

    def test_power_sums_match_oracle(self, rng):
        x = rng.uniform(-1e3, 1e3, size=10_000)
        s = MomentsSketch.from_values(x, 10)
        ps, _ = fsum_oracle(x, 10)
        np.testing.assert_array_less(np.abs(s.power_sums - ps), 1e-9 * field_scale(x, 10))

    def test_log_sums_match_oracle(self, rng):
        x = rng.lognormal(0, 2, size=2000)
        s = MomentsSketch.from_values(x, 8)
        _, ls = fsum_oracle(x, 8)
        scale = field_scale(np.log(x), 8)
        np.testing.assert_array_less(np.abs(s.log_sums - ls), 1e-12 * scale)

    def test_compensated_is_exactly_rounded(self, rng):
        x = rng.normal(size=3000)
        s = MomentsSketch.from_values(x, 6, compensated=True)
        ps, _ = fsum_oracle(x, 6)
        # fsum of correctly computed powers; iterated products differ by a few ulps per term
        np.testing.assert_allclose(s.power_sums, ps, rtol=1e-13, atol=1e-13 * field_scale(x, 6).max())

    def test_add_and_add_many_agree(self, rng):
        x = rng.exponential(size=500)
        one = MomentsSketch(10)
        for v in x:
            one.add(v)
        many = MomentsSketch.from_values(x, 10)
        assert_close_fields(one, many, field_scale(x, 10), field_scale(np.log(x), 10), 1e-12)

    def test_mean(self):
        assert MomentsSketch.from_values([1, 2, 3, 6], 3).mean == 3.0


class TestMerge:
    def test_small_example(self):
        m = sk_mod.merge(MomentsSketch.from_values([1, 2], 2), MomentsSketch.from_values([3], 2))
        assert (m.count, m.min, m.max) == (3, 1, 3)
        np.testing.assert_array_equal(m.power_sums, [6, 14])

    def test_empty_is_identity(self, rng):
        s = MomentsSketch.from_values(rng.normal(size=50), 7)
        assert sk_mod.merge(MomentsSketch(7), s) == s
        assert s + MomentsSketch(7) == s

    def test_order_mismatch(self):
        with pytest.raises(IncompatibleSketchError):
            MomentsSketch(3).merge(MomentsSketch(4))

    def test_shards_equal_pointwise(self, rng):
        x = rng.normal(3, 2, size=1000)
        whole = MomentsSketch.from_values(x, 10)
        parts = [MomentsSketch.from_values(p, 10) for p in np.array_split(x, 5)]
        assert_close_fields(merge_all(parts), whole, field_scale(x, 10), field_scale(np.log(x[x > 0]), 10), 1e-12)

    def test_merge_into_matches_merge(self, rng):
        a = MomentsSketch.from_values(rng.normal(size=20), 5)
        b = MomentsSketch.from_values(rng.normal(size=30), 5)
        assert a.copy().merge_into(b) == a.merge(b)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=40),
           st.lists(finite, min_size=1, max_size=40))
    def test_commutative_associative(self, xs, ys, zs):
        a, b, c = (MomentsSketch.from_values(v, 6) for v in (xs, ys, zs))
        everything = xs + ys + zs
        scale = field_scale(everything, 6)
        pos = [v for v in everything if v > 0]
        lscale = field_scale(np.log(pos), 6) if pos else np.zeros(6)
        assert_close_fields(a + b, b + a, scale, lscale, 1e-12)
        assert_close_fields((a + b) + c, a + (b + c), scale, lscale, 1e-12)

    def test_merge_cost_independent_of_count(self, rng):
        big = MomentsSketch.from_values(rng.normal(size=1_000_000), 10)
        small = MomentsSketch.from_values(rng.normal(size=10), 10)

        def per_merge(s):
            acc = MomentsSketch(10)
            t0 = time.perf_counter()
            for _ in range(20_000):
                acc.merge_into(s)
            return time.perf_counter() - t0

        per_merge(small)
        t_small = min(per_merge(small) for _ in range(3))
        t_big = min(per_merge(big) for _ in range(3))
        assert 0.5 < t_big / t_small < 2.0


class TestSubtract:
    def test_recovers_first_operand(self, rng):
        x = rng.normal(size=300)
        y = rng.normal(size=200)
        s, p = MomentsSketch.from_values(x, 10), MomentsSketch.from_values(y, 10)
        back = sk_mod.subtract(s + p, p)
        assert back.count == s.count
        assert back.extrema_stale
        np.testing.assert_array_less(np.abs(back.power_sums - s.power_sums), 1e-9 * field_scale(x, 10))

    def test_self_inverse(self, rng):
        s = MomentsSketch.from_values(rng.exponential(size=30), 4)
        z = s - s
        assert z.count == 0
        np.testing.assert_array_equal(z.power_sums, 0)
        np.testing.assert_array_equal(z.log_sums, 0)

    def test_too_many(self):
        with pytest.raises(InvalidSubtractionError):
            MomentsSketch.from_values([1.0], 3) - MomentsSketch.from_values([1.0, 2.0], 3)

    def test_stale_blocks_estimation_until_extrema_set(self, rng):
        x = rng.exponential(size=500)
        w = MomentsSketch.from_values(x, 6) - MomentsSketch.from_values(x[:100], 6)
        with pytest.raises(InvalidParameterError):
            fit_sketch(w)
        assert fit_sketch(w.with_extrema(x[100:].min(), x[100:].max())).converged


class TestSerialization:
    def test_size_for_k10(self):
        assert len(MomentsSketch(10).to_bytes()) == sk_mod.serialized_size(10) == 192

    def test_layout(self):
        s = MomentsSketch.from_values([2.0, 4.0], 2)
        b = sk_mod.serialize(s)
        magic, ver, flags, order, count = struct.unpack_from("<4sBBHQ", b)
        assert (magic, ver, flags, order, count) == (b"MSK1", 1, 0, 2, 2)
        np.testing.assert_array_equal(np.frombuffer(b[16:], "<f8"),
                                      [2, 4, 6, 20, s.log_sums[0], s.log_sums[1]])

    def test_roundtrip_random(self, rng):
        for _ in range(100):
            k = int(rng.integers(1, 21))
            s = MomentsSketch.from_values(rng.normal(rng.uniform(-50, 50), 10, size=int(rng.integers(1, 50))), k)
            if rng.random() < 0.2:
                s = s - MomentsSketch.from_values([], k)
            out = sk_mod.deserialize(sk_mod.serialize(s))
            assert out == s and out.extrema_stale == s.extrema_stale

    def test_empty_roundtrip(self):
        assert sk_mod.deserialize(MomentsSketch(5).to_bytes()) == MomentsSketch(5)

    @pytest.mark.parametrize("mutate", [
        lambda b: b"",
        lambda b: b"XSK1" + b[4:],
        lambda b: b[:4] + b"\x02" + b[5:],
        lambda b: b[:-1],
        lambda b: b[:6] + struct.pack("<H", 0) + b[8:],
    ])
    def test_format_errors(self, mutate):
        with pytest.raises(SketchFormatError):
            sk_mod.deserialize(mutate(MomentsSketch.from_values([1.0, 2.0], 3).to_bytes()))

    def test_iter_concatenated(self, rng):
        sketches = [MomentsSketch.from_values(rng.normal(size=5), 4) for _ in range(3)]
        blob = b"".join(s.to_bytes() for s in sketches)
        assert list(sk_mod.iter_sketches(blob)) == sketches


class TestSketchArray:
    def test_from_groups_matches_individual(self, rng):
        x = rng.exponential(size=5000)
        g = rng.integers(0, 40, size=5000)
        arr = SketchArray.from_groups(x, g, 40, 8)
        for i in (0, 17, 39):
            ref = MomentsSketch.from_values(x[g == i], 8)
            got = arr[i]
            assert got.count == ref.count and got.min == ref.min and got.max == ref.max
            np.testing.assert_allclose(got.power_sums, ref.power_sums, rtol=1e-12)
            np.testing.assert_allclose(got.log_sums, ref.log_sums, rtol=1e-12, atol=1e-12 * np.abs(ref.log_sums).max())

    def test_merged_and_group_reduce(self, rng):
        x = rng.normal(size=2000)
        g = rng.integers(0, 50, size=2000)
        arr = SketchArray.from_groups(x, g, 50, 6)
        whole = MomentsSketch.from_values(x, 6)
        np.testing.assert_allclose(arr.merged().power_sums, whole.power_sums,
                                   atol=1e-12 * field_scale(x, 6).max())
        coarse = arr.group_reduce(np.arange(50) % 3, 3)
        assert coarse.counts.sum() == 2000
        ref = MomentsSketch.from_values(x[(g % 3) == 1], 6)
        assert coarse[1].min == ref.min and coarse[1].count == ref.count

    def test_parallel_matches_sequential(self, rng):
        arr = SketchArray.from_groups(rng.exponential(size=40_000), np.arange(40_000) // 4, 10_000, 10)
        seq = arr.merged()
        for th in (2, 4, 8):
            par = arr.merged(threads=th)
            assert par.count == seq.count and par.min == seq.min and par.max == seq.max
            np.testing.assert_allclose(par.power_sums, seq.power_sums, rtol=1e-12)
            np.testing.assert_allclose(par.log_sums, seq.log_sums, rtol=1e-12, atol=1e-9)
        assert arr.merged() == seq  # sequential mode is reproducible bit for bit
