import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosmicdram.core.data_objects import TestStatus
from cosmicdram.core.exceptions import (
    EmptySampleError,
    InvalidPValueError,
    LengthMismatchError,
)
from cosmicdram.stats import (
    CorrelationResult,
    KsResult,
    by_adjust,
    chi_square_uniformity,
    kendall_tau_b,
    ks_two_sample,
    partition_by_threshold,
    percentile,
)
from cosmicdram.timegrid import PairedSeries


tied_pairs = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=50
)
small_samples = st.lists(st.integers(0, 10), min_size=1, max_size=30)


def split_pairs(pairs):
    return (
        np.array([p[0] for p in pairs], dtype=float),
        np.array([p[1] for p in pairs], dtype=float),
    )


def tau_b_oracle(x, y):
    """O(n^2) pair classification."""
    concordant = discordant = ties_x = ties_y = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx = np.sign(x[i] - x[j])
        dy = np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            ties_x += 1
        elif dy == 0:
            ties_y += 1
        elif dx == dy:
            concordant += 1
        else:
            discordant += 1
    return (concordant - discordant) / math.sqrt(
        (concordant + discordant + ties_x) * (concordant + discordant + ties_y)
    )


def ks_oracle(a, b):
    """Largest ECDF gap over all the breakpoints."""
    return max(
        abs(np.mean(np.asarray(a) <= t) - np.mean(np.asarray(b) <= t))
        for t in list(a) + list(b)
    )


def by_oracle(p):
    m = len(p)
    c = sum(1.0 / k for k in range(1, m + 1))
    order = np.argsort(p)
    adjusted = np.empty(m)
    running = 1.0
    for rank in range(m, 0, -1):
        index = order[rank - 1]
        running = min(running, p[index] * m * c / rank)
        adjusted[index] = running
    return adjusted


class TestKendall:
    def test_perfect(self):
        result = kendall_tau_b([1, 2, 3], [1, 2, 3])
        assert result.status == TestStatus.OK
        assert result.tau_b == pytest.approx(1.0)
        assert kendall_tau_b([1, 2, 3], [3, 2, 1]).tau_b == pytest.approx(-1.0)

    def test_tie(self):
        result = kendall_tau_b([1, 1, 2], [1, 2, 3])
        assert result.tau_b == pytest.approx(2 / math.sqrt(6), abs=1e-12)
        assert result.n == 3

    def test_constant(self):
        result = kendall_tau_b([5, 5, 5], [1, 2, 3])
        assert result.status == TestStatus.UNTESTABLE_CONSTANT
        assert result.tau_b is None and result.p_raw is None
        assert kendall_tau_b([1, 2, 3], [0, 0, 0]).status == TestStatus.UNTESTABLE_CONSTANT

    def test_too_few(self):
        assert kendall_tau_b([1, 2], [2, 1]).status == TestStatus.TOO_FEW_POINTS
        assert kendall_tau_b([], []).status == TestStatus.TOO_FEW_POINTS

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            kendall_tau_b([1, 2, 3], [1, 2])

    def test_result_consistency(self):
        with pytest.raises(ValueError):
            CorrelationResult(TestStatus.OK, tau_b=None, p_raw=0.5)
        with pytest.raises(ValueError):
            CorrelationResult(TestStatus.TOO_FEW_POINTS, tau_b=0.1, p_raw=0.5)

    def test_p_value(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=200)
        strong = kendall_tau_b(x, x + rng.normal(scale=0.1, size=200))
        assert strong.p_raw < 1e-10
        assert 0 <= kendall_tau_b(x, rng.normal(size=200)).p_raw <= 1

    @settings(max_examples=100, deadline=None)
    @given(tied_pairs)
    def test_oracle(self, pairs):
        x, y = split_pairs(pairs)
        result = kendall_tau_b(x, y)
        if np.all(x == x[0]) or np.all(y == y[0]):
            assert result.status == TestStatus.UNTESTABLE_CONSTANT
            return
        assert result.status == TestStatus.OK
        assert result.tau_b == pytest.approx(tau_b_oracle(x, y), abs=1e-12)
        assert -1 <= result.tau_b <= 1
        assert 0 <= result.p_raw <= 1
        swapped = kendall_tau_b(y, x)
        assert swapped.tau_b == pytest.approx(result.tau_b, abs=1e-12)
        assert swapped.p_raw == pytest.approx(result.p_raw, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(tied_pairs)
    def test_antisymmetry(self, pairs):
        x, y = split_pairs(pairs)
        result = kendall_tau_b(x, y)
        flipped = kendall_tau_b(x, -y)
        assert flipped.status == result.status
        if result.status == TestStatus.OK:
            assert flipped.tau_b == pytest.approx(-result.tau_b, abs=1e-12)
            assert flipped.p_raw == pytest.approx(result.p_raw, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(tied_pairs)
    def test_monotone_invariance(self, pairs):
        x, y = split_pairs(pairs)
        result = kendall_tau_b(x, y)
        transformed = kendall_tau_b(np.exp(x), y**3 + 2 * y)
        assert transformed.status == result.status
        if result.status == TestStatus.OK:
            assert transformed.tau_b == pytest.approx(result.tau_b, abs=1e-12)
            assert transformed.p_raw == pytest.approx(result.p_raw, abs=1e-12)


class TestKs:
    def test_identical(self):
        result = ks_two_sample([1, 2, 3, 4], [1, 2, 3, 4])
        assert result.d_stat == 0
        assert result.p_raw == pytest.approx(1.0)
        assert result.direction == 0

    def test_disjoint(self):
        result = ks_two_sample([1, 2, 3], [10, 11, 12])
        assert result.d_stat == pytest.approx(1.0)
        assert result.direction == -1
        assert result.n == 6

    def test_interleaved(self):
        result = ks_two_sample([1, 3, 5], [2, 4, 6])
        assert result.d_stat == pytest.approx(1 / 3)

    def test_direction(self):
        assert ks_two_sample([10, 11, 12], [1, 2, 3]).direction == 1

    def test_p_value_formula(self):
        a, b = [1, 2, 3, 4, 5, 6], [4, 5, 6, 7, 8, 9, 10, 11]
        result = ks_two_sample(a, b)
        ne = 6 * 8 / 14
        lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * result.d_stat
        series = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 101))
        assert result.p_raw == pytest.approx(min(max(series, 0.0), 1.0), abs=1e-10)

    def test_empty(self):
        with pytest.raises(EmptySampleError):
            ks_two_sample([], [1.0])
        with pytest.raises(EmptySampleError):
            ks_two_sample([1.0], [])

    def test_result_consistency(self):
        with pytest.raises(ValueError):
            KsResult(TestStatus.OK)
        assert KsResult(TestStatus.TOO_FEW_POINTS, n_high=0, n_rest=4).stat is None

    @settings(max_examples=100, deadline=None)
    @given(small_samples, small_samples)
    def test_oracle(self, a, b):
        result = ks_two_sample(a, b)
        assert result.d_stat == pytest.approx(ks_oracle(a, b), abs=1e-12)
        assert 0 <= result.p_raw <= 1

    @settings(max_examples=100, deadline=None)
    @given(small_samples, small_samples)
    def test_symmetry(self, a, b):
        result = ks_two_sample(a, b)
        swapped = ks_two_sample(b, a)
        assert swapped.d_stat == pytest.approx(result.d_stat, abs=1e-12)
        assert swapped.p_raw == pytest.approx(result.p_raw, abs=1e-12)
        assert swapped.direction == -result.direction

    @settings(max_examples=100, deadline=None)
    @given(small_samples, small_samples)
    def test_monotone_invariance(self, a, b):
        result = ks_two_sample(a, b)
        transformed = ks_two_sample(np.log1p(a), np.log1p(b))
        assert transformed.d_stat == pytest.approx(result.d_stat, abs=1e-12)
        assert transformed.p_raw == pytest.approx(result.p_raw, abs=1e-12)


class TestByAdjust:
    def test_example(self):
        adjusted = by_adjust([0.04, 0.01, 0.03]).p_adj
        assert adjusted == pytest.approx([0.04 * 5.5 / 3, 0.055, 0.04 * 5.5 / 3], abs=1e-12)

    def test_cap(self):
        assert by_adjust([1.0, 1.0]).p_adj == [1.0, 1.0]

    def test_single(self):
        assert by_adjust([0.05]).p_adj == pytest.approx([0.05])

    def test_empty(self):
        assert len(by_adjust([])) == 0

    @pytest.mark.parametrize("bad", [[0.5, 1.2], [-0.1], [float("nan")]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidPValueError):
            by_adjust(bad)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
    def test_oracle(self, p):
        adjusted = np.array(by_adjust(p).p_adj)
        np.testing.assert_allclose(adjusted, by_oracle(np.array(p)), atol=1e-12)
        assert np.all(adjusted >= np.array(p) - 1e-15)
        assert np.all(adjusted <= 1.0)
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(adjusted[order]) >= -1e-12)


class TestPercentile:
    @pytest.mark.parametrize(
        "sample,q,expected",
        [([1, 2, 3, 4, 5], 50, 3.0), ([1, 2, 3, 4], 100, 4.0), ([10, 20], 90, 19.0), ([7], 30, 7.0)],
    )
    def test_examples(self, sample, q, expected):
        assert percentile(sample, q) == pytest.approx(expected)

    def test_invalid(self):
        with pytest.raises(EmptySampleError):
            percentile([], 50)
        with pytest.raises(ValueError):
            percentile([1.0], 101)

    def test_partition(self):
        paired = PairedSeries([None] * 4, [70.0, 71.0, 72.0, 73.0], [1.0, 2.0, 3.0, 4.0])
        high, rest = partition_by_threshold(paired, percentile(paired.neutron, 50))
        np.testing.assert_array_equal(high, [3.0, 4.0])
        np.testing.assert_array_equal(rest, [1.0, 2.0])


class TestUniformity:
    def test_flat(self):
        result = chi_square_uniformity(np.full(24, 10.0))
        assert result.status == TestStatus.OK
        assert result.statistic == pytest.approx(0.0)
        assert result.p_raw == pytest.approx(1.0)
        assert result.dof == 23

    def test_peaked(self):
        profile = np.zeros(24)
        profile[9] = 240
        assert chi_square_uniformity(profile).p_raw < 1e-10

    def test_empty(self):
        assert chi_square_uniformity(np.zeros(24)).status == TestStatus.TOO_FEW_POINTS


@pytest.mark.slow
class TestOracleSweeps:
    def test_kendall(self):
        rng = np.random.default_rng(0)
        cases = [rng.integers(0, 7, size=(2, rng.integers(3, 51))).astype(float) for _ in range(1000)]
        start = time.perf_counter()
        results = [kendall_tau_b(x, y) for x, y in cases]
        assert time.perf_counter() - start < 5
        for (x, y), result in zip(cases, results):
            if np.all(x == x[0]) or np.all(y == y[0]):
                assert result.status == TestStatus.UNTESTABLE_CONSTANT
            else:
                assert result.tau_b == pytest.approx(tau_b_oracle(x, y), abs=1e-12)

    def test_ks(self):
        rng = np.random.default_rng(1)
        for i in range(1000):
            sizes = rng.integers(1, 60, size=2)
            if i % 2:
                a, b = (rng.integers(0, 10, size=n) for n in sizes)
            else:
                a, b = (rng.exponential(size=n) for n in sizes)
            result = ks_two_sample(a, b)
            assert result.d_stat == pytest.approx(ks_oracle(a, b), abs=1e-12)

    def test_by_adjust(self):
        rng = np.random.default_rng(2)
        for i in range(1000):
            p = rng.random(rng.integers(1, 10_001))
            if i % 3 == 0:
                p = np.round(p**4, 3)
            adjusted = np.array(by_adjust(p).p_adj)
            np.testing.assert_allclose(adjusted, by_oracle(p), rtol=0, atol=1e-12)
            assert np.all(adjusted >= p - 1e-15)
            assert np.all(adjusted <= 1.0)
            order = np.argsort(p, kind="stable")
            assert np.all(np.diff(adjusted[order]) >= -1e-12)
