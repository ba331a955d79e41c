import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from fidkit.expansions import (
    ExpansionError,
    ExpansionSpec,
    ImproperPosteriorError,
    LogLikProfile,
    NonConcaveError,
    StandardizedExpansion,
    UnsupportedExpansionError,
    curvature,
    expansion_quantile,
    expansion_spec,
    fd_correction,
    fd_expansion,
    information_corrected_correction,
    jeffreys_posterior,
    mc_condition_statistic,
    mle_expansion,
    mle_fit,
    mle_polynomial,
    nef_condition_statistic,
    quadratic_variance_check,
    second_order_condition_check,
)
from fidkit.fiducial_core import FiducialError, confidence_interval, fd_quantile
from fidkit.numerics import Bracket, std_normal_cdf

import oracles


def exp_profile(mu_hat=1.0):
    return LogLikProfile(lambda m: -mu_hat / m - math.log(m), mu_hat, 0.05 * mu_hat)


class TestCorrections:
    def test_fd_correction_coefficients(self):
        g = fd_correction(1.0, 4.0)
        np.testing.assert_allclose(g.coef, [-2 / 3, 0.0, 2 / 3])

    def test_information_corrected_for_exponential(self):
        # I'/I^{3/2} = -2 for the exponential mean
        g = information_corrected_correction(1.0, 4.0, -2.0)
        np.testing.assert_allclose(g.coef, [-1.0 + 4 / 3, 0.0, 2 / 3])

    def test_mle_polynomial(self):
        np.testing.assert_allclose(mle_polynomial("exponential").coef, [-1 / 3, 0.0, -2 / 3])
        with pytest.raises(UnsupportedExpansionError):
            mle_polynomial("cauchy")


class TestCurvature:
    def test_exponential(self):
        b, ell3 = curvature(exp_profile())
        assert b == pytest.approx(1.0, rel=1e-6)
        assert ell3 == pytest.approx(4.0, rel=1e-4)

    @pytest.mark.parametrize("mu_hat", [0.2, 1.0, 7.0])
    def test_standardized_skew_is_scale_free(self, mu_hat):
        b, ell3 = curvature(exp_profile(mu_hat))
        assert b**1.5 * ell3 == pytest.approx(4.0, rel=1e-4)

    def test_convex_profile_rejected(self):
        with pytest.raises(NonConcaveError):
            curvature(LogLikProfile(lambda t: t * t, 0.0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExpansionSpec(0.0, 10, -1.0, 0.0, Polynomial([0.0]))
        with pytest.raises(ValueError):
            ExpansionSpec(0.0, 1, 1.0, 0.0, Polynomial([0.0]))


class TestStandardizedExpansion:
    def test_matches_printed_formula_in_the_monotone_part(self):
        psi = StandardizedExpansion(15, fd_correction(1.0, 4.0))
        for z in (-1.0, 0.0, 0.5, 2.0, 3.0):
            assert psi.cdf(z) == pytest.approx(oracles.exp_fd_expansion_cdf(z, 15), abs=1e-14)
        assert psi.cdf(0.0) == pytest.approx(0.56867, abs=1e-5)

    def test_zero_correction_is_normal(self):
        psi = StandardizedExpansion(10, Polynomial([0.0]))
        for z in (-4.0, -1.2, 0.0, 2.2):
            assert psi.cdf(z) == pytest.approx(std_normal_cdf(z), abs=1e-15)
        assert psi.meta["central_monotone"]

    def test_monotonization_is_flagged(self):
        psi = StandardizedExpansion(15, fd_correction(1.0, 4.0))
        assert not psi.meta["central_monotone"]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 200), st.floats(-6, 6), st.floats(-2, 2))
    def test_cdf_is_monotone_and_bounded(self, n, skew, shift):
        g = fd_correction(1.0, skew) + Polynomial([shift])
        psi = StandardizedExpansion(n, g)
        z = np.linspace(-8, 8, 321)
        vals = np.array([psi.cdf(v) for v in z])
        assert np.all(np.diff(vals) >= -1e-15)
        assert vals.min() >= 0.0 and vals.max() <= 1.0

    def test_quantile_scan_oracle(self):
        psi = StandardizedExpansion(15, fd_correction(1.0, 4.0))
        for p in (0.05, 0.5, 0.95):
            ref = oracles.scan_quantile(psi.cdf, p, -5.0, 5.0)
            assert expansion_quantile(psi, p) == pytest.approx(ref, abs=1e-6)

    def test_quantile_working_range(self):
        psi = StandardizedExpansion(15, fd_correction(1.0, 4.0))
        with pytest.raises(ExpansionError):
            psi.quantile(0.0005)
        with pytest.raises(ExpansionError):
            psi.quantile(0.9995)

    def test_density_integrates_to_cdf_increment(self):
        psi = StandardizedExpansion(30, fd_correction(1.0, 4.0))
        from fidkit.numerics import integrate

        inc = integrate(np.vectorize(psi.pdf), (0.0, 2.0)).value
        assert inc == pytest.approx(psi.cdf(2.0) - psi.cdf(0.0), abs=1e-8)


class TestFdAndMleExpansions:
    def test_exponential_intervals(self):
        spec = expansion_spec(exp_profile(), 15)
        fd = fd_expansion(spec)
        ci = confidence_interval(fd, 0.9)
        assert (ci.lower, ci.upper) == pytest.approx((0.62998, 1.51865), abs=2e-5)
        mle = mle_expansion(1.0, 15, 1.0, mle_polynomial("exponential"))
        ci = confidence_interval(mle, 0.9)
        assert (ci.lower, ci.upper) == pytest.approx((0.68987, 1.55711), abs=2e-5)

    def test_mle_requires_polynomial(self):
        with pytest.raises(UnsupportedExpansionError):
            mle_expansion(1.0, 15, 1.0, None)

    def test_fd_quantiles_round_trip(self):
        fd = fd_expansion(expansion_spec(exp_profile(2.0), 40))
        for p in (0.01, 0.3, 0.5, 0.9):
            assert fd.cdf(fd_quantile(fd, p)) == pytest.approx(p, abs=1e-10)

    def _sup_distance(self, n, g):
        psi = StandardizedExpansion(n, g)
        z = np.linspace(-3.5, 3.5, 141)
        sd = 1.0 / math.sqrt(n)
        return max(abs(psi.cdf(v) - oracles.inverse_gamma_fd_cdf(1.0 + sd * v, n, 1.0)) for v in z if 1.0 + sd * v > 0)

    def test_information_corrected_rate(self):
        g = information_corrected_correction(1.0, 4.0, -2.0)
        d = [self._sup_distance(n, g) for n in (50, 200, 800)]
        assert d[1] / d[0] <= 0.3 and d[2] / d[1] <= 0.3

    def test_printed_expansion_stalls_at_root_n(self):
        g = fd_correction(1.0, 4.0)
        d = [self._sup_distance(n, g) for n in (50, 200)]
        assert d[1] / d[0] == pytest.approx(0.5, abs=0.01)


class TestMleFit:
    def test_hyperbola(self):
        s1, s2, n = 17.321, 0.116, 5
        eta = mle_fit(lambda e: -(math.exp(-e) * s1 + math.exp(e) * s2) / n, (-10.0, 10.0))
        assert eta == pytest.approx(2.5031, abs=1e-4)
        assert eta == pytest.approx(0.5 * math.log(s1 / s2), abs=1e-9)

    def test_bvn(self):
        n, s1, s2 = 15, 19.248, 4.827
        rho = mle_fit(lambda r: oracles.bvn_loglik(r, s1, s2, n), (-0.999, 0.999))
        assert rho == pytest.approx(0.209, abs=5e-3)
        assert rho == pytest.approx(oracles.bvn_mle_scan(n, s1, s2), abs=1e-7)

    def test_boundary_optimum(self):
        with pytest.raises(ExpansionError):
            mle_fit(lambda t: t, (0.0, 1.0))

    def test_bimodal(self):
        with pytest.raises(ExpansionError):
            mle_fit(lambda t: math.exp(-((t - 1) ** 2) * 20) + 1.5 * math.exp(-((t - 2) ** 2) * 20), (-3.0, 3.0))

    def test_infinite_bracket(self):
        with pytest.raises(ValueError):
            mle_fit(lambda t: -t * t, (-math.inf, 1.0))


class TestJeffreys:
    def test_exponential_equals_exact(self):
        n = 15
        post = jeffreys_posterior(
            lambda m: -n / m - n * np.log(m), lambda m: -np.log(m), (0.0, math.inf), 1.0, 0.25
        )
        for mu in (0.6, 1.0, 1.7, 3.0):
            assert post.cdf(mu) == pytest.approx(oracles.inverse_gamma_fd_cdf(mu, n, 1.0), abs=1e-9)

    def test_improper(self):
        # one observation with a flat prior on log(mu): the integral diverges at infinity
        with pytest.raises(ImproperPosteriorError):
            jeffreys_posterior(lambda m: -1.0 / m - np.log(m), lambda m: 0.0 * m, (0.0, math.inf), 1.0)


class TestConditionChecks:
    grid = [0.5, 1.0, 2.0, 4.0]

    def test_nef_exponential_holds(self):
        t = nef_condition_statistic(lambda m: m * m, lambda m: 2 * m)
        res = second_order_condition_check(t, self.grid, Bracket(0.0, math.inf))
        assert res.holds
        assert res.values[0] == pytest.approx(4.0)

    def test_nef_poisson_fails(self):
        t = nef_condition_statistic(lambda m: m, lambda m: 1.0)
        assert not second_order_condition_check(t, self.grid).holds

    def test_quadratic_variance(self):
        assert quadratic_variance_check(lambda m: 1.0, lambda m: 0.0, [-1.0, 0.0, 3.0])
        assert quadratic_variance_check(lambda m: m * m, lambda m: 2 * m, self.grid)
        assert not quadratic_variance_check(lambda m: m * (1 - m), lambda m: 1 - 2 * m, [0.2, 0.5, 0.7])

    def test_grid_outside_domain(self):
        t = nef_condition_statistic(lambda m: m * m, lambda m: 2 * m)
        with pytest.raises(FiducialError):
            second_order_condition_check(t, [-1.0, 1.0], Bracket(0.0, math.inf))

    def test_nonpositive_variance(self):
        t = nef_condition_statistic(lambda m: -1.0, lambda m: 0.0)
        with pytest.raises(ValueError):
            t(1.0)

    def test_mc_hyperbola_holds(self):
        def sampler(eta, rng, k):
            return rng.exponential(math.exp(eta), k), rng.exponential(math.exp(-eta), k)

        def score(eta, xy):
            x, y = xy
            return x * math.exp(-eta) - y * math.exp(eta)

        t = mc_condition_statistic(score, lambda eta: 2.0, sampler, seed=7, draws=50_000)
        assert second_order_condition_check(t, [-1.0, 0.0, 0.7, 2.0], simulated=True).holds

    def test_mc_exponential_holds(self):
        t = mc_condition_statistic(
            lambda m, x: (x - m) / m**2, lambda m: m**-2.0, lambda m, rng, k: rng.exponential(m, k), seed=7
        )
        res = second_order_condition_check(t, self.grid, simulated=True)
        assert res.holds
        assert np.mean(res.values) == pytest.approx(2.0, abs=0.1)

    def test_mc_poisson_fails(self):
        t = mc_condition_statistic(
            lambda m, x: (x - m) / m, lambda m: 1.0 / m, lambda m, rng, k: rng.poisson(m, k).astype(float), seed=7
        )
        assert not second_order_condition_check(t, [0.3, 1.0, 5.0], simulated=True).holds

    def test_mc_is_reproducible(self):
        t = mc_condition_statistic(
            lambda m, x: (x - m) / m**2, lambda m: m**-2.0, lambda m, rng, k: rng.exponential(m, k), seed=3, draws=1000
        )
        assert t(1.5) == t(1.5)
