"""Coefficient arithmetic, CLT normalizer, oscillation series, and the
log-polynomial fitter."""

import math

import numpy as np
import pytest

from regencomp.asymptotics import (
    ExpansionCoefficients,
    clt_normalize,
    covariance_prediction,
    cumulative_small_parts,
    mean_expansion,
    oscillation_phi,
    small_part_expansion,
    variance_leading,
)
from regencomp.errors import StabilityError
from regencomp.exact import PatternSpec, moments_all_parts, moments_pattern
from regencomp.fitting import fit_log_polynomial
from regencomp.models import EwensLikeModel, GammaModel, GeometricAtomsModel
from regencomp.specfun import EULER_GAMMA, polygamma


class TestMeanExpansion:
    def test_gamma_leading(self):
        for theta in (0.5, 1.0, 2.0, 7.0):
            exp = mean_expansion(GammaModel(theta))
            assert abs(exp.powers[2] - theta / 2.0) < 1e-14
        assert abs(mean_expansion(GammaModel(1.0)).powers[1] - 0.5) < 1e-14

    def test_ewens_leading(self):
        theta = 2.5
        exp = mean_expansion(EwensLikeModel(theta))
        assert abs(exp.powers[2] - 1.0 / (2.0 * polygamma(1, theta))) < 1e-13

    def test_no_constant_term(self):
        exp = mean_expansion(GammaModel(1.0))
        assert set(exp.powers) == {1, 2}
        assert exp.leading() == exp.powers[2]

    def test_geom_uses_centered_constant(self):
        gm = GeometricAtomsModel()
        exp = mean_expansion(gm)
        m1, m2 = gm.log_moment(1), gm.log_moment(2)
        want = m2 / (2 * m1**2) + gm.effective_constant / m1
        assert abs(exp.powers[1] - want) < 1e-14
        assert "oscillatory" in exp.remainder_order

    def test_no_constant_raises(self):
        class Bare:
            constant = None

            def log_moment(self, j):
                return 1.0

        with pytest.raises(StabilityError):
            mean_expansion(Bare())

    def test_evaluate(self):
        exp = ExpansionCoefficients({2: 0.5, 1: 0.25}, "O(1)")
        assert abs(exp.evaluate(2.0) - (2.0 + 0.5)) < 1e-15


class TestVarianceLeading:
    def test_gamma(self):
        assert abs(variance_leading(GammaModel(1.0)) - 1.0 / 3.0) < 1e-14
        assert abs(variance_leading(GammaModel(2.0)) - 2.0 / 3.0) < 1e-14

    def test_geom_value(self):
        # arithmetic in the truncated-lattice log moments
        assert abs(variance_leading(GeometricAtomsModel()) - 0.2440) < 1e-4

    def test_scale_coherence(self):
        for theta in (0.3, 1.0, 4.0):
            model = GammaModel(theta)
            m1, m2 = model.log_moment(1), model.log_moment(2)
            ratio = mean_expansion(model).powers[2] / variance_leading(model)
            assert abs(ratio - 3.0 * m1**2 / (2.0 * m2)) < 1e-12


class TestCltNormalize:
    def test_centering(self):
        model = GammaModel(1.0)
        n = 1000
        center = math.log(n) ** 2 / 2.0
        assert clt_normalize(model, n, center) == 0.0

    def test_one_standard_unit(self):
        model = GammaModel(1.0)
        n = int(round(math.exp(10.0)))
        L = math.log(n)
        k = L * L / 2.0 + math.sqrt(L**3 / 3.0)
        assert abs(clt_normalize(model, n, k) - 1.0) < 1e-4

    def test_exact_pmf_mean_window(self):
        # the normalized exact law drifts slowly; at moderate n the mean
        # must already sit within one standard unit
        model = GammaModel(1.0)
        table = moments_all_parts(model, 2000)
        z = clt_normalize(model, 2000, table.mean[2000])
        assert -1.0 < z < 1.0

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            clt_normalize(GammaModel(1.0), 1, 0.0)


class TestSmallParts:
    def test_gamma_r1(self):
        mean, var_leading, d1 = small_part_expansion(GammaModel(1.0), 1)
        assert abs(mean.powers[1] - 1.0) < 1e-14
        assert abs(var_leading - 2.0) < 1e-14
        assert abs(d1 - 0.5) < 1e-13
        assert abs(mean.powers[0] - d1) < 1e-15

    def test_slope_scales_with_r(self):
        model = GammaModel(1.0)
        s1 = small_part_expansion(model, 1).mean.powers[1]
        s3 = small_part_expansion(model, 3).mean.powers[1]
        assert abs(s1 / s3 - 3.0) < 1e-12

    def test_covariance_matrix(self):
        model = GammaModel(1.0)
        cov = covariance_prediction(model, 10)
        assert np.allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) > 0.0)
        assert abs(cov[0, 1] - 0.5) < 1e-14
        for r in (1, 2, 5):
            assert abs(cov[r - 1, r - 1] - small_part_expansion(model, r).var_leading) < 1e-13

    def test_cumulative(self):
        model = GammaModel(1.0)
        assert cumulative_small_parts(model, 1) == (
            small_part_expansion(model, 1).mean.powers[1],
            small_part_expansion(model, 1).var_leading,
        )
        mean2, var2 = cumulative_small_parts(model, 2)
        assert abs(mean2 - 1.5) < 1e-14
        assert abs(var2 - 3.75) < 1e-14

    def test_harmonic_growth(self):
        model = GammaModel(1.0)
        mean_big, _ = cumulative_small_parts(model, 20000)
        assert abs(mean_big - (math.log(20000.0) + EULER_GAMMA)) < 1e-4


class TestOscillation:
    def test_periodicity(self):
        for u in (0.0, 0.3, 11.7):
            assert abs(oscillation_phi(u + 1.0) - oscillation_phi(u)) < 1e-18

    def test_amplitude(self):
        us = np.linspace(0.0, 1.0, 400)
        vals = np.array([oscillation_phi(u) for u in us])
        peak = np.max(np.abs(vals))
        assert 5e-5 < peak < 1.1e-4

    def test_zero_mean(self):
        # trapezoid over one period of a smooth periodic function
        us = np.linspace(0.0, 1.0, 2049)
        vals = np.array([oscillation_phi(u) for u in us])
        integral = np.trapezoid(vals, us)
        assert abs(integral) < 1e-12

    def test_truncation(self):
        import mpmath

        bound = 3.0 * abs(complex(mpmath.gamma(12j * math.pi)))
        for u in (0.1, 0.49, 0.73):
            assert abs(oscillation_phi(u, 5) - oscillation_phi(u, 9)) < bound

    def test_matches_lattice_exponent(self):
        # the whole point: linear detrending of the poisson transform
        # leaves exactly this series, up to exponentially small terms
        gm = GeometricAtomsModel()
        for L in (10.0, 10.37, 12.125, 13.9):
            dev = gm.poisson_laplace(math.exp(L)) - L - gm.effective_constant
            assert abs(dev - oscillation_phi(L)) < 1e-10, L

    def test_rejects_bad_kmax(self):
        with pytest.raises(ValueError):
            oscillation_phi(0.5, 0)


class TestFitting:
    def test_exact_polynomial(self):
        xs = np.arange(1.0, 3001.0)
        L = np.log(xs)
        ys = 0.5 * L**2 + 0.3 * L + 7.0
        fit = fit_log_polynomial((xs, ys), 2, window=(math.exp(6.0), 3000.0))
        assert abs(fit.coefficient(2) - 0.5) < 1e-10
        assert abs(fit.coefficient(1) - 0.3) < 1e-9
        assert abs(fit.coefficient(0) - 7.0) < 1e-8
        assert fit.residual_rms < 1e-10
        assert fit.condition_number > 1.0

    def test_pinned_coefficients(self):
        xs = np.arange(1.0, 3001.0)
        L = np.log(xs)
        ys = 0.5 * L**2 + 0.3 * L + 7.0
        fit = fit_log_polynomial((xs, ys), 2, window=(500.0, 3000.0), fixed={1: 0.3, 0: 7.0})
        assert abs(fit.coefficient(2) - 0.5) < 1e-12
        assert abs(fit.coefficient(1) - 0.3) < 1e-15
        fit_all = fit_log_polynomial((xs, ys), 2, window=(500.0, 3000.0), fixed={2: 0.5, 1: 0.3, 0: 7.0})
        assert fit_all.condition_number == 1.0
        assert fit_all.residual_rms < 1e-12

    def test_moment_table_input(self):
        model = GammaModel(1.0)
        table = moments_all_parts(model, 4000)
        free = fit_log_polynomial(table, 2, window=(math.exp(6.0), 4000.0))
        assert abs(free.coefficient(2) - 0.5) < 0.05
        pinned = fit_log_polynomial(
            table, 2, window=(math.exp(6.0), 4000.0), fixed={1: mean_expansion(model).powers[1]}
        )
        assert abs(pinned.coefficient(2) - 0.5) < 0.015

    def test_variance_table(self):
        model = GammaModel(1.0)
        table = moments_all_parts(model, 4000)
        ns = np.arange(4001, dtype=float)
        fit = fit_log_polynomial((ns, table.variance()), 3, window=(math.exp(6.0), 4000.0))
        assert abs(fit.coefficient(3) - 1.0 / 3.0) < 0.05

    def test_small_part_table(self):
        model = GammaModel(1.0)
        table = moments_pattern(model, 4000, PatternSpec.single(1))
        fit = fit_log_polynomial(table, 1, window=(math.exp(6.0), 4000.0))
        assert abs(fit.coefficient(1) - 1.0) < 0.05
        assert abs(fit.coefficient(0) - 0.5) < 0.2

    def test_validation(self):
        xs = np.arange(1.0, 100.0)
        ys = np.log(xs)
        with pytest.raises(ValueError):
            fit_log_polynomial((xs, ys), 4, window=(1.0, 99.0))
        with pytest.raises(ValueError):
            fit_log_polynomial((xs, ys), 1, window=(50.0, 60.0))
        with pytest.raises(ValueError):
            fit_log_polynomial((xs, ys), 1, window=(1.0, 99.0), fixed={2: 1.0})
