"""Exact DP engine tests: enumeration-oracle equivalence at small n,
closed-form anchors, and the structural invariants of the tables."""

import math

import numpy as np
import pytest

from oracles import (
    composition_law,
    law_cross_moment,
    law_parts_pmf,
    law_pattern_moments,
)
from regencomp.errors import TableRangeError
from regencomp.exact import (
    PatternSpec,
    cross_moment,
    first_part_law,
    moments_all_parts,
    moments_pattern,
    parts_pmf,
    sweep,
)
from regencomp.models import EwensLikeModel, GammaModel, GenericTailModel, GeometricAtomsModel

ALL_KINDS = ["gamma", "ewens", "geom", "generic"]


def make(kind):
    if kind == "gamma":
        return GammaModel(1.0)
    if kind == "ewens":
        return EwensLikeModel(2.0)
    if kind == "geom":
        return GeometricAtomsModel()
    knots = [(math.exp(-k), k - 0.5 + 0.1 * math.sin(k)) for k in range(1, 10)]
    return GenericTailModel(sorted(knots))


@pytest.fixture(scope="module")
def gamma1():
    return GammaModel(1.0)


class TestPatternSpec:
    def test_constructors(self):
        assert PatternSpec.all_parts().membership(37)
        one = PatternSpec.single(3)
        assert one.membership(3) and not one.membership(2)
        assert one.description == "{3}"
        upto = PatternSpec.up_to(4)
        assert upto.membership(4) and not upto.membership(5)
        picked = PatternSpec.from_set([5, 2, 2])
        assert picked.description == "{2,5}"
        assert picked.membership(2) and not picked.membership(3)

    def test_indicator(self):
        ind = PatternSpec.from_set([1, 4]).indicator(5)
        assert list(ind) == [1.0, 0.0, 0.0, 1.0, 0.0]

    def test_invalid(self):
        with pytest.raises(ValueError):
            PatternSpec.single(0)
        with pytest.raises(ValueError):
            PatternSpec.up_to(-2)
        with pytest.raises(ValueError):
            PatternSpec.from_set([])
        with pytest.raises(ValueError):
            PatternSpec.from_set([3, 0])


class TestFirstPartLaw:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_singleton(self, kind):
        law = first_part_law(make(kind), 1)
        assert law.weights[0] == 0.0
        assert abs(law.weights[1] - 1.0) < 1e-14

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_normalized(self, kind):
        law = first_part_law(make(kind), 73)
        assert np.all(law.weights >= 0.0)
        assert abs(law.weights.sum() - 1.0) < 1e-10

    def test_ewens_theta1_harmonic(self):
        # weights proportional to 1/m is the exactly solvable case
        n = 50
        law = first_part_law(EwensLikeModel(1.0), n)
        h_n = sum(1.0 / k for k in range(1, n + 1))
        for m in (1, 2, 7, 50):
            assert abs(law.weights[m] - (1.0 / m) / h_n) < 1e-12

    def test_gamma_theta1_n2(self, gamma1):
        law = first_part_law(gamma1, 2)
        w1 = 2.0 * math.log(1.5) / math.log(3.0)
        w2 = math.log(4.0 / 3.0) / math.log(3.0)
        assert abs(law.weights[1] - w1) < 1e-12
        assert abs(law.weights[2] - w2) < 1e-12

    def test_rejects_zero(self, gamma1):
        with pytest.raises(ValueError):
            first_part_law(gamma1, 0)


class TestPartsPMF:
    def test_degenerate(self, gamma1):
        assert list(parts_pmf(gamma1, 0).probs) == [1.0]
        p1 = parts_pmf(gamma1, 1).probs
        assert p1[0] == 0.0 and abs(p1[1] - 1.0) < 1e-14

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_normalization(self, kind):
        model = make(kind)
        for n in (7, 50, 300):
            p = parts_pmf(model, n).probs
            assert p.shape == (n + 1,)
            assert p[0] == 0.0
            assert np.all(p >= 0.0)
            assert abs(p.sum() - 1.0) < 1e-11, (kind, n)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_enumeration_small(self, kind):
        model = make(kind)
        law = composition_law(model, 6)
        ref = law_parts_pmf(law, 6)
        got = parts_pmf(model, 6).probs
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_enumeration_n8(self, gamma1):
        law = composition_law(gamma1, 8)
        ref = law_parts_pmf(law, 8)
        got = parts_pmf(gamma1, 8).probs
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_mean_matches_moment_table(self, gamma1):
        table = moments_all_parts(gamma1, 300)
        for n in (50, 300):
            p = parts_pmf(gamma1, n).probs
            pmf_mean = float(np.dot(p, np.arange(n + 1)))
            assert abs(pmf_mean - table.mean[n]) < 1e-9

    def test_memory_guard(self, gamma1):
        with pytest.raises(TableRangeError):
            parts_pmf(gamma1, 100, memory_budget=1000)


class TestMoments:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_base_case(self, kind):
        table = moments_all_parts(make(kind), 1)
        assert table.mean[0] == 0.0 and table.second_moment[0] == 0.0
        assert abs(table.mean[1] - 1.0) < 1e-14
        assert abs(table.second_moment[1] - 1.0) < 1e-14

    def test_gamma_n2_hand_dp(self, gamma1):
        law = first_part_law(gamma1, 2)
        table = moments_all_parts(gamma1, 2)
        assert abs(table.mean[2] - (1.0 + law.weights[1])) < 1e-14
        assert abs(table.mean[2] - 1.7381) < 1e-4

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_enumeration_small(self, kind):
        model = make(kind)
        law = composition_law(model, 7)
        for pattern in (PatternSpec.all_parts(), PatternSpec.single(2), PatternSpec.up_to(3)):
            ref_e, ref_s = law_pattern_moments(law, pattern.membership)
            table = moments_pattern(model, 7, pattern)
            assert abs(table.mean[7] - ref_e) < 1e-10, pattern.description
            assert abs(table.second_moment[7] - ref_s) < 1e-10, pattern.description

    def test_mean_monotone_and_variance_nonneg(self, gamma1):
        table = moments_all_parts(gamma1, 400)
        assert np.all(np.diff(table.mean) > 0.0)
        assert np.all(table.second_moment - table.mean**2 >= -1e-12)

    def test_all_parts_equals_full_pattern(self, gamma1):
        # indicator of {1..n_max} is all ones, so the DP runs bit-identical
        a = moments_all_parts(gamma1, 60)
        b = moments_pattern(gamma1, 60, PatternSpec.up_to(60))
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.second_moment, b.second_moment)

    def test_pattern_beyond_n_is_zero(self, gamma1):
        table = moments_pattern(gamma1, 10, PatternSpec.single(11))
        assert np.all(table.mean == 0.0)
        assert np.all(table.second_moment == 0.0)

    def test_growth_ballpark(self, gamma1):
        # mean should track (theta/2) log^2 n at moderate n already
        table = moments_all_parts(gamma1, 2000)
        ratio = table.mean[2000] / (0.5 * math.log(2000.0) ** 2)
        assert 0.9 < ratio < 1.6

    def test_small_part_ratio(self, gamma1):
        # mean count of part size 1 is about twice that of size 2
        t1 = moments_pattern(gamma1, 3000, PatternSpec.single(1))
        t2 = moments_pattern(gamma1, 3000, PatternSpec.single(2))
        assert 2.0 * 0.8 < t1.mean[3000] / t2.mean[3000] < 2.0 * 1.2

    def test_factorial_moments(self, gamma1):
        table = moments_all_parts(gamma1, 30)
        assert np.allclose(table.factorial_moment(1), table.mean)
        fm2 = table.factorial_moment(2)
        assert np.allclose(fm2, table.second_moment - table.mean)
        with pytest.raises(ValueError):
            table.factorial_moment(3)


class TestCrossMoment:
    def test_diagonal_equals_second_moment(self, gamma1):
        table = moments_pattern(gamma1, 40, PatternSpec.single(2))
        diag = cross_moment(gamma1, 40, 2, 2)
        assert np.max(np.abs(diag - table.second_moment)) < 1e-12

    def test_zero_before_both_fit(self, gamma1):
        m = cross_moment(gamma1, 4, 2, 3)
        assert np.all(m == 0.0)
        m = cross_moment(gamma1, 5, 2, 3)
        assert m[4] == 0.0 and m[5] > 0.0

    def test_symmetry(self, gamma1):
        a = cross_moment(gamma1, 30, 1, 2)
        b = cross_moment(gamma1, 30, 2, 1)
        assert np.max(np.abs(a - b)) < 1e-13

    @pytest.mark.parametrize("kind", ["gamma", "ewens"])
    def test_enumeration_small(self, kind):
        model = make(kind)
        law = composition_law(model, 8)
        ref = law_cross_moment(law, 1, 2)
        got = cross_moment(model, 8, 1, 2)
        assert abs(got[8] - ref) < 1e-10


class TestSweep:
    def test_matches_single_target_calls(self, gamma1):
        patterns = [PatternSpec.all_parts(), PatternSpec.single(1), PatternSpec.single(2)]
        tables, cross = sweep(gamma1, 150, patterns, cross_pairs=[(1, 2)])
        for pat, table in zip(patterns, tables):
            ref = moments_pattern(gamma1, 150, pat)
            assert np.max(np.abs(table.mean - ref.mean)) < 1e-13
            assert np.max(np.abs(table.second_moment - ref.second_moment)) < 1e-12
        ref_cross = cross_moment(gamma1, 150, 1, 2)
        assert np.max(np.abs(cross[(1, 2)] - ref_cross)) < 1e-12

    def test_diagonal_pair(self, gamma1):
        tables, cross = sweep(gamma1, 60, [PatternSpec.single(3)], cross_pairs=[(3, 3)])
        assert np.max(np.abs(cross[(3, 3)] - tables[0].second_moment)) < 1e-12


class TestWeightIdentity:
    def test_sum_r_times_mean_count(self, gamma1):
        # sum_r r E K_{n,r} = n since the parts tile n exactly
        n_max = 200
        means = np.zeros((n_max + 1, n_max + 1))
        for r in range(1, n_max + 1):
            means[r] = moments_pattern(gamma1, n_max, PatternSpec.single(r)).mean
        sizes = np.arange(n_max + 1, dtype=float)
        total = sizes @ means  # total[n] = sum_r r e_r[n]
        for n in (1, 3, 17, 100, 200):
            assert abs(total[n] - n) < 1e-8 * n
