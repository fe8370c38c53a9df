import math

import numpy as np
import pytest
from scipy.special import erf

from phasefront.meanfield import (FixedPointError, MeanFieldState,
                                  covariance_map,
                                  fixed_point_covariance,
                                  fixed_point_variance, gauss_hermite,
                                  mean_field_divergence, normal_grid,
                                  trace_boundary, variance_map)

RULE = normal_grid(512)


def erf_second_moment(nu):
    """Closed form of E[erf(sqrt(nu) Z)^2] for standard normal Z, from
    the Gaussian integral identity E[erf(u) erf(v)]
    = (2/pi) arcsin(2 Cov(u, v) / sqrt((1 + 2 Var u)(1 + 2 Var v)))."""
    return (2.0 / math.pi) * math.asin(2.0 * nu / (1.0 + 2.0 * nu))


def erf_cross_moment(nu, c12):
    """Closed form of E[erf(u1) erf(u2)], Var = nu, Cov = c12."""
    return (2.0 / math.pi) * math.asin(2.0 * c12 / (1.0 + 2.0 * nu))


def mc_variance_map(nu, sw, sb, samples, seed):
    z = np.random.default_rng(seed).standard_normal(samples)
    vals = erf(np.sqrt(nu) * z) ** 2
    est = sw**2 * vals.mean() + sb**2
    stderr = sw**2 * vals.std(ddof=1) / np.sqrt(samples)
    return est, stderr


def mc_covariance_map(nu, c12, sw, sb, samples, seed):
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(samples)
    z2 = rng.standard_normal(samples)
    rho = c12 / nu if nu > 0 else 0.0
    u1 = np.sqrt(nu) * z1
    u2 = np.sqrt(nu) * (rho * z1 + np.sqrt(1 - rho**2) * z2)
    prod = erf(u1) * erf(u2)
    est = sw**2 * prod.mean() + sb**2
    stderr = sw**2 * prod.std(ddof=1) / np.sqrt(samples)
    return est, stderr


class TestVarianceMap:
    def test_zero_weight_scale(self):
        assert variance_map(1.7, 0.0, 0.9, rule=RULE) == pytest.approx(0.81)

    def test_zero_variance_erf(self):
        assert variance_map(0.0, 2.0, 0.5, rule=RULE) \
            == pytest.approx(0.25)

    def test_matches_monte_carlo(self):
        est, stderr = mc_variance_map(1.0, 2.0, 0.5, 10**6, seed=0)
        quad = variance_map(1.0, 2.0, 0.5, rule=RULE)
        assert abs(quad - est) < 4 * stderr

    def test_bounds_for_bounded_activation(self):
        for nu in (0.0, 0.3, 2.0, 15.0):
            g = variance_map(nu, 1.8, 0.6, rule=RULE)
            assert 0.36 <= g <= 1.8**2 + 0.36


class TestCovarianceMap:
    def test_full_correlation_equals_variance_map(self):
        for nu, sw, sb in [(0.5, 1.0, 0.2), (2.0, 2.5, 1.0),
                           (7.0, 1.5, 0.0)]:
            g = variance_map(nu, sw, sb, rule=RULE)
            h = covariance_map(nu, nu, sw, sb, rule=RULE)
            assert abs(g - h) < 1e-10

    def test_zero_weight_scale(self):
        assert covariance_map(1.0, 0.5, 0.0, 0.7, rule=RULE) \
            == pytest.approx(0.49)

    def test_matches_monte_carlo(self):
        nu = fixed_point_variance(1.5, 0.3, rule=RULE)
        est, stderr = mc_covariance_map(nu, 0.5 * nu, 1.5, 0.3, 10**6,
                                        seed=1)
        quad = covariance_map(nu, 0.5 * nu, 1.5, 0.3, rule=RULE)
        assert abs(quad - est) < 4 * stderr

    def test_rejects_c12_above_nu(self):
        with pytest.raises(ValueError):
            covariance_map(1.0, 1.5, 1.0, 0.0, rule=RULE)

    def test_quadrature_order_converged(self):
        # doubling the default rule's resolution must leave both maps
        # unchanged to high precision across the working variance range
        r256 = normal_grid(256)
        r512 = normal_grid(512)
        for nu in (0.5, 5.0, 20.0):
            assert abs(variance_map(nu, 2.0, 0.5, rule=r256)
                       - variance_map(nu, 2.0, 0.5, rule=r512)) < 1e-8
            assert abs(covariance_map(nu, 0.3 * nu, 2.0, 0.5, rule=r256)
                       - covariance_map(nu, 0.3 * nu, 2.0, 0.5,
                                        rule=r512)) < 1e-8

    def test_matches_closed_form_erf_moments(self):
        for nu in (0.1, 1.0, 5.0, 20.0):
            want = 1.7**2 * erf_second_moment(nu) + 0.3**2
            assert variance_map(nu, 1.7, 0.3, rule=RULE) \
                == pytest.approx(want, abs=1e-12)
            for frac in (0.0, 0.4, 0.9):
                want = 1.7**2 * erf_cross_moment(nu, frac * nu) + 0.3**2
                assert covariance_map(nu, frac * nu, 1.7, 0.3, rule=RULE) \
                    == pytest.approx(want, abs=1e-12)

    def test_gauss_hermite_polynomial_moments(self):
        # the Gauss rule must reproduce normal moments E[Z^k] exactly up
        # to degree 2 order - 1
        r = gauss_hermite(8)
        for k, want in [(0, 1.0), (1, 0.0), (2, 1.0), (3, 0.0), (4, 3.0),
                        (6, 15.0), (8, 105.0), (10, 945.0)]:
            got = float(np.dot(r.weights, r.nodes**k))
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_gauss_hermite_agrees_at_small_variance(self):
        # Gauss-Hermite converges quickly while the erf transition is
        # wide relative to the node spacing
        r = gauss_hermite(128)
        for nu in (0.1, 0.5, 2.0):
            assert variance_map(nu, 1.0, 0.0, rule=r) \
                == pytest.approx(erf_second_moment(nu), abs=1e-10)

    def test_monotone_in_c12(self):
        nu = fixed_point_variance(2.0, 0.5, rule=RULE)
        cs = np.linspace(0.0, nu, 100)
        hs = [covariance_map(nu, c, 2.0, 0.5, rule=RULE) for c in cs]
        assert np.all(np.diff(hs) >= -1e-12)


class TestMeanFieldState:
    def test_rejects_covariance_above_variance(self):
        with pytest.raises(ValueError):
            MeanFieldState(1.0, 1.5)
        with pytest.raises(ValueError):
            MeanFieldState(-0.1, 0.0)

    def test_step_matches_scalar_maps(self):
        state = MeanFieldState(2.0, 0.8).step(1.5, 0.5, rule=RULE)
        assert state.nu == pytest.approx(
            variance_map(2.0, 1.5, 0.5, rule=RULE))
        assert state.c12 == pytest.approx(
            covariance_map(2.0, 0.8, 1.5, 0.5, rule=RULE))

    def test_iterated_state_reaches_fixed_point(self):
        rule = normal_grid(201)
        state = MeanFieldState(3.0**2 + 0.1**2, 0.0)
        for _ in range(2000):
            state = state.step(3.0, 0.1, rule=rule)
        assert state.divergence == pytest.approx(
            mean_field_divergence(3.0, 0.1, rule=rule), abs=1e-4)


class TestFixedPoints:
    def test_constant_map(self):
        assert fixed_point_variance(0.0, 0.7, rule=RULE) \
            == pytest.approx(0.49, abs=1e-9)

    def test_contractive_regime_collapses(self):
        assert fixed_point_variance(0.1, 0.0, rule=RULE) \
            == pytest.approx(0.0, abs=1e-9)

    def test_matches_long_direct_iteration(self):
        # oracle: undamped, unaccelerated iteration of the quadrature map
        rule = normal_grid(201)
        nu = 2.0**2 + 1.0**2
        for _ in range(10**4):
            nu = variance_map(nu, 2.0, 1.0, rule=rule)
        assert abs(fixed_point_variance(2.0, 1.0, rule=rule) - nu) < 1e-3

    def test_covariance_constant_map(self):
        nu = fixed_point_variance(0.0, 0.6, rule=RULE)
        c = fixed_point_covariance(nu, 0.0, 0.6, rule=RULE)
        assert c == pytest.approx(nu, abs=1e-9)

    def test_ordered_phase_coincide(self):
        tol = 1e-10
        nu = fixed_point_variance(0.5, 0.1, rule=RULE, tol=tol)
        c = fixed_point_covariance(nu, 0.5, 0.1, rule=RULE, tol=tol)
        assert abs(nu - c) <= 10 * tol

    def test_chaotic_phase_separate(self):
        tol = 1e-10
        nu = fixed_point_variance(3.0, 0.1, rule=RULE, tol=tol)
        c = fixed_point_covariance(nu, 3.0, 0.1, rule=RULE, tol=tol)
        assert c < nu - 10 * tol

    def test_chaotic_matches_direct_iteration(self):
        rule = normal_grid(201)
        nu = fixed_point_variance(3.0, 0.1, rule=rule)
        c_direct = 0.0
        for _ in range(10**4):
            c_direct = covariance_map(nu, min(c_direct, nu), 3.0, 0.1,
                                      rule=rule)
        ell = mean_field_divergence(3.0, 0.1, rule=rule)
        assert abs(ell - 2.0 * (nu - c_direct)) < 1e-3

    def test_nonconvergence_raises_with_state(self):
        with pytest.raises(FixedPointError) as exc:
            fixed_point_variance(2.0, 1.0, rule=RULE, tol=1e-10, max_iter=2)
        assert exc.value.residual > 0


class TestDivergenceAndBoundary:
    def test_zero_weight_scale_is_zero(self):
        for sb in (0.0, 0.5, 2.0):
            assert mean_field_divergence(0.0, sb, rule=RULE) == 0.0

    def test_transition_near_1p6_at_unit_bias(self):
        assert mean_field_divergence(1.2, 1.0, rule=RULE) < 0.01
        assert mean_field_divergence(2.0, 1.0, rule=RULE) > 0.01

    def test_boundary_at_unit_bias(self):
        [(sw, sb)] = trace_boundary(0.01, [1.0], rule=RULE)
        assert sb == 1.0
        assert 1.4 <= sw <= 1.9

    def test_boundary_at_zero_bias(self):
        # bisection on a long direct-iteration oracle puts the zero-bias
        # crossing near the erf critical variance, just above sqrt(pi)/2
        [(sw, _)] = trace_boundary(0.01, [0.0], rule=RULE)
        assert 0.85 <= sw <= 1.1

    def test_no_crossing_gives_empty_row(self):
        [(sw, _)] = trace_boundary(1e6, [1.0], rule=RULE)
        assert sw is None
