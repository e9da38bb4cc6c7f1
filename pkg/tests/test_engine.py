"""Tests for assignment enumeration, quantile/p-value rules, and the test runner."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewclusters.engine import (
    ZERO_POWER_WARNING,
    enumerate_assignments,
    p_value,
    permutation_quantile,
    placebo_statistics,
    randomized_threshold,
    run_placebo_test,
    subsample_assignments,
    _mask_matrix,
)
from fewclusters.model import (
    Assignment,
    ClusterLayout,
    EstimateVector,
    FewClustersError,
    GroupTooSmall,
    TestConfig,
    TooManyAssignments,
)


def vec(values, q1):
    values = np.asarray(values, dtype=float)
    return EstimateVector(values, ClusterLayout(q1=q1, q0=values.size - q1))


class TestEnumeration:
    def test_count_3_3(self):
        assert len(enumerate_assignments(ClusterLayout(3, 3))) == 20

    def test_count_6_6(self):
        assert len(enumerate_assignments(ClusterLayout(6, 6))) == 924

    def test_count_1_1(self):
        assert len(enumerate_assignments(ClusterLayout(1, 1))) == 2

    def test_identity_first_lexicographic(self):
        assignments = enumerate_assignments(ClusterLayout(2, 2))
        sets = [a.treated_set for a in assignments]
        assert sets[0] == (0, 1)
        assert sets == sorted(sets)
        assert sets == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_cap_enforced(self):
        with pytest.raises(TooManyAssignments):
            enumerate_assignments(ClusterLayout(15, 15), cap=1000)

    def test_no_duplicates(self):
        assignments = enumerate_assignments(ClusterLayout(3, 4))
        assert len({a.treated_set for a in assignments}) == math.comb(7, 3)


class TestSubsampling:
    def test_identity_prepended(self):
        layout = ClusterLayout(3, 3)
        draws = subsample_assignments(layout, m=10, seed=0)
        assert len(draws) == 11
        assert draws[0].is_identity(layout)

    def test_deterministic(self):
        layout = ClusterLayout(3, 3)
        a = subsample_assignments(layout, m=100, seed=42)
        b = subsample_assignments(layout, m=100, seed=42)
        assert [x.treated_set for x in a] == [y.treated_set for y in b]

    def test_uniform_frequencies(self):
        # each of the C(6, 3) = 20 assignments should appear with
        # frequency 0.05 +/- 0.02 across 1000 draws
        layout = ClusterLayout(3, 3)
        draws = subsample_assignments(layout, m=1000, seed=7)[1:]
        counts = {}
        for a in draws:
            counts[a.treated_set] = counts.get(a.treated_set, 0) + 1
        assert len(counts) == 20
        for c in counts.values():
            assert abs(c / 1000 - 0.05) < 0.02

    def test_requires_positive_m(self):
        with pytest.raises(FewClustersError):
            subsample_assignments(ClusterLayout(3, 3), m=0, seed=0)


class TestQuantile:
    def test_one_to_twenty_at_05(self):
        # N = 20, k = 20 - floor(1) = 19, 19th smallest of {1..20} is 19
        assert permutation_quantile(list(range(1, 21)), 0.05) == 19.0

    def test_small_set(self):
        # N = 6, floor(6 * 0.05) = 0, k = 6: the maximum
        assert permutation_quantile([-2, -1, 0, 0, 1, 2], 0.05) == 2.0

    def test_median_like(self):
        # N = 4, k = 4 - floor(2) = 2
        assert permutation_quantile([1, 2, 3, 4], 0.5) == 2.0

    def test_float_roundup_guard(self):
        # 20 * 0.95 = 19.000000000000004 in floats; k must still be 19
        stats = list(range(1, 21))
        assert permutation_quantile(stats, 0.05) == 19.0
        for n in (20, 40, 60, 80, 100, 120, 200, 1000):
            q = permutation_quantile(list(range(1, n + 1)), 0.05)
            assert q == n - math.floor(n * 0.05)

    def test_invalid_alpha(self):
        with pytest.raises(FewClustersError):
            permutation_quantile([1.0, 2.0], 0.0)

    def test_empty(self):
        with pytest.raises(FewClustersError):
            permutation_quantile([], 0.05)


class TestPValue:
    def test_hand_example(self):
        # stats {1, 2, 0, 0, -1, -2}, observed 1: two values >= 1
        assert p_value(1.0, [1, 2, 0, 0, -1, -2]) == pytest.approx(2 / 6)

    def test_membership_floor(self):
        # observed is always a member, so p >= 1/N
        rng = np.random.default_rng(3)
        for _ in range(100):
            stats = rng.normal(size=20)
            assert p_value(stats[0], stats) >= 1 / 20


class TestRandomizedThreshold:
    def test_unique_max(self):
        # N = 20 distinct values at alpha = 0.05: c = 19, one value > c,
        # one equal, delta = (1 - 1)/1 = 0
        c, delta = randomized_threshold(list(range(1, 21)), 0.05)
        assert c == 19.0
        assert delta == 0.0

    def test_fractional(self):
        # alpha = 0.075: k = 20 - 1 = 19 so c = 19 again, but
        # delta = (20 * 0.075 - 1)/1 = 0.5
        c, delta = randomized_threshold(list(range(1, 21)), 0.075)
        assert c == 19.0
        assert delta == pytest.approx(0.5)

    def test_all_equal(self):
        # all tied: c is the common value, nothing above, N values equal,
        # delta = N * alpha / N = alpha
        c, delta = randomized_threshold([3.0] * 10, 0.05)
        assert c == 3.0
        assert delta == pytest.approx(0.05)


class TestPlaceboStatistics:
    def test_unadjusted_hand_values(self):
        layout = ClusterLayout(2, 2)
        mask = _mask_matrix(enumerate_assignments(layout), 4)
        stats = placebo_statistics(np.array([3.0, 1.0, 2.0, 0.0]), mask, 2, False)
        np.testing.assert_allclose(stats, [1.0, 2.0, 0.0, 0.0, -2.0, -1.0])

    def test_adjusted_matches_scalar(self):
        from fewclusters.stats import adjusted_statistic

        rng = np.random.default_rng(9)
        layout = ClusterLayout(3, 4)
        assignments = enumerate_assignments(layout)
        mask = _mask_matrix(assignments, layout.q)
        for _ in range(20):
            x = vec(rng.normal(size=7), q1=3)
            batch = placebo_statistics(x.values, mask, 3, True)
            scalar = [adjusted_statistic(x, a) for a in assignments]
            np.testing.assert_allclose(batch, scalar, rtol=1e-9, atol=1e-12)

    def test_identity_row_bitwise(self):
        rng = np.random.default_rng(5)
        layout = ClusterLayout(3, 3)
        mask = _mask_matrix(enumerate_assignments(layout), 6)
        for _ in range(20):
            v = rng.normal(size=6)
            adj = placebo_statistics(v, mask, 3, True)
            unadj = placebo_statistics(v, mask, 3, False)
            assert adj[0] == unadj[0]

    def test_degenerate_split_signed_inf(self):
        # constant within both groups for some splits of (1, 1, 0, 0)
        layout = ClusterLayout(2, 2)
        mask = _mask_matrix(enumerate_assignments(layout), 4)
        stats = placebo_statistics(np.array([1.0, 1.0, 0.0, 0.0]), mask, 2, True)
        # identity: mean diff 1, variance ratio 1
        assert stats[0] == 1.0
        # splits {0,2}, {0,3}, {1,2}, {1,3} have zero variance and zero mean diff
        np.testing.assert_array_equal(stats[1:5], np.zeros(4))
        # complement {2,3}: mean diff -1, degenerate in the same way as identity
        # but identity variance is also 0 -> ratio convention gives signed inf
        assert stats[5] == -np.inf


class TestRunPlaceboTest:
    def test_reject_hand_example(self):
        # x = (5, 4, 6, 1, 0, 2): separation is so clean the observed
        # statistic is the strict maximum of all 20 placebo values
        x = vec([5.0, 4.0, 6.0, 1.0, 0.0, 2.0], q1=3)
        res = run_placebo_test(x, TestConfig(alpha=0.05, adjustment="unadjusted"))
        assert res.statistic == pytest.approx(4.0)
        assert res.n_assignments == 20
        assert res.p_value == pytest.approx(1 / 20)
        assert res.reject

    def test_zero_power_small_design(self):
        # q1 = q0 = 2: N = 6 < 1/alpha, the max is never exceeded
        x = vec([10.0, 9.0, 0.0, 1.0], q1=2)
        res = run_placebo_test(x, TestConfig(alpha=0.05, adjustment="unadjusted"))
        assert not res.reject
        assert res.p_value == pytest.approx(1 / 6)
        assert ZERO_POWER_WARNING in res.warnings

    def test_adjusted_needs_two_per_group(self):
        x = vec([1.0, 2.0, 3.0], q1=1)
        with pytest.raises(GroupTooSmall):
            run_placebo_test(x, TestConfig(adjustment="adjusted"))
        res = run_placebo_test(x, TestConfig(adjustment="unadjusted"))
        assert res.n_assignments == 3

    def test_sign_duality(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            x = vec(rng.normal(size=8), q1=4)
            res_less = run_placebo_test(
                x, TestConfig(side="less", adjustment="unadjusted")
            )
            res_greater_neg = run_placebo_test(
                x.negated(), TestConfig(side="greater", adjustment="unadjusted")
            )
            assert res_less.reject == res_greater_neg.reject
            assert res_less.p_value == res_greater_neg.p_value

    def test_two_sided_p_value(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            x = vec(rng.normal(size=8), q1=4)
            two = run_placebo_test(x, TestConfig(side="two_sided", alpha=0.10))
            plus = run_placebo_test(x, TestConfig(side="greater", alpha=0.05))
            minus = run_placebo_test(x, TestConfig(side="less", alpha=0.05))
            assert two.p_value == pytest.approx(
                min(1.0, 2.0 * min(plus.p_value, minus.p_value))
            )
            assert two.reject == (plus.reject or minus.reject)

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(19)
        alphas = [0.01, 0.05, 0.10, 0.20, 0.40]
        for _ in range(30):
            x = vec(rng.normal(size=8), q1=4)
            rejections = [
                run_placebo_test(x, TestConfig(alpha=a)).reject for a in alphas
            ]
            # once rejected at some level, rejected at every larger level
            for lo, hi in itertools.pairwise(rejections):
                assert hi or not lo

    def test_subsampling_not_used_when_enumerable(self):
        rng = np.random.default_rng(29)
        x = vec(rng.normal(size=10), q1=5)
        res = run_placebo_test(
            x, TestConfig(adjustment="unadjusted", max_assignments=50_000)
        )
        # C(10, 5) = 252 <= 50000: full enumeration wins
        assert res.n_assignments == 252

    def test_subsampling_consistency(self):
        # with q1 = q0 = 10 the exact set has C(20, 10) = 184756 assignments,
        # more than the subsample budget; a large subsample must land near
        # the exact p-value
        rng = np.random.default_rng(23)
        x = vec(rng.normal(size=20) + np.r_[np.full(10, 0.5), np.zeros(10)], q1=10)
        exact = run_placebo_test(x, TestConfig(adjustment="unadjusted"))
        approx = run_placebo_test(
            x,
            TestConfig(adjustment="unadjusted", max_assignments=50_000, seed=4),
        )
        assert approx.n_assignments == 50_001
        assert abs(approx.p_value - exact.p_value) < 0.01

    @given(
        st.lists(
            st.floats(min_value=-50, max_value=50, allow_nan=False),
            min_size=6,
            max_size=6,
        ),
        st.floats(min_value=0.01, max_value=0.5),
        st.sampled_from(["adjusted", "unadjusted"]),
    )
    @settings(max_examples=150, deadline=None)
    def test_reject_iff_p_below_alpha(self, values, alpha, adjustment):
        x = vec(values, q1=3)
        res = run_placebo_test(x, TestConfig(alpha=alpha, adjustment=adjustment))
        assert res.reject == (res.p_value <= alpha)
