"""Closed-form barrier profiles: values, slopes, limits, certified bands."""

import math

import numpy as np
import pytest

from mesahs import barriers
from mesahs.errors import ConfigError


def fd_slope(f, x, d=1e-6):
    return (f(x + d) - f(x - d)) / (2 * d)


class TestHarmonicProfile:
    def test_boundary_values(self):
        for n in (2, 3):
            for alpha, beta in [(1.0, 0.0), (1.0, 1.0), (3.5, 0.4)]:
                outer = 1 + alpha + beta
                assert barriers.annulus_harmonic(alpha, n, alpha, beta) == pytest.approx(1.0)
                assert barriers.annulus_harmonic(outer, n, alpha, beta) == pytest.approx(0.0, abs=1e-14)

    def test_midpoint_value_3d(self):
        # (r^-1 - 2^-1) / (1 - 2^-1) at r = 1.5
        assert barriers.annulus_harmonic(1.5, 3, 1.0, 0.0) == pytest.approx(1 / 3)

    def test_outside_annulus_rejected(self):
        with pytest.raises(ConfigError):
            barriers.annulus_harmonic(0.5, 2, 1.0, 0.0)
        with pytest.raises(ConfigError):
            barriers.annulus_harmonic(2.5, 2, 1.0, 0.0)

    def test_outer_slope_values(self):
        assert barriers.annulus_harmonic_outer_slope(3, 1.0, 0.0) == pytest.approx(-0.5)
        expected_2d = 1.0 / (2.0 * math.log(0.5))
        assert barriers.annulus_harmonic_outer_slope(2, 1.0, 0.0) == pytest.approx(expected_2d)

    def test_outer_slope_matches_finite_differences(self):
        for n in (2, 3):
            for alpha, beta in [(1.0, 0.3), (2.0, 1.0), (10.0, 0.0)]:
                outer = 1 + alpha + beta
                fd = (barriers.annulus_harmonic(outer, n, alpha, beta)
                      - barriers.annulus_harmonic(outer - 1e-6, n, alpha, beta)) / 1e-6
                closed = barriers.annulus_harmonic_outer_slope(n, alpha, beta)
                assert fd == pytest.approx(closed, rel=1e-5)

    def test_limit_large_alpha(self):
        for n in (2, 3):
            for beta in (0.0, 0.5, 1.0):
                slope = barriers.annulus_harmonic_outer_slope(n, 1e6, beta)
                assert abs(slope - (-1.0 / (1 + beta))) < 1e-3


class TestPoissonProfile:
    def test_zero_on_both_spheres(self):
        for n in (2, 3):
            for alpha, beta in [(1.0, 0.0), (1.0, 1.0), (5.0, 0.7)]:
                outer = 1 + alpha + beta
                assert barriers.annulus_poisson(alpha, n, alpha, beta) == pytest.approx(0.0, abs=1e-12)
                assert barriers.annulus_poisson(outer, n, alpha, beta) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("n,alpha,beta,r0", [(3, 1.0, 1.0, 2.0),
                                                 (2, 1.0, 0.5, 1.8),
                                                 (3, 4.0, 0.2, 4.6)])
    def test_radial_laplacian_is_2n(self, n, alpha, beta, r0):
        f = lambda r: barriers.annulus_poisson(r, n, alpha, beta)
        d = 1e-4
        lap = ((f(r0 + d) - 2 * f(r0) + f(r0 - d)) / d ** 2
               + (n - 1) / r0 * (f(r0 + d) - f(r0 - d)) / (2 * d))
        assert lap == pytest.approx(2 * n, abs=1e-6)

    def test_outer_slope_matches_finite_differences(self):
        for n in (2, 3):
            for alpha, beta in [(1.0, 0.0), (1.0, 1.0), (7.0, 0.25)]:
                outer = 1 + alpha + beta
                f = lambda r: barriers.annulus_poisson(r, n, alpha, beta)
                fd = (f(outer) - f(outer - 1e-6)) / 1e-6
                assert fd == pytest.approx(
                    barriers.annulus_poisson_outer_slope(n, alpha, beta), rel=1e-5)

    def test_limit_large_alpha(self):
        for n in (2, 3):
            for beta in (0.0, 0.5, 1.0):
                slope = barriers.annulus_poisson_outer_slope(n, 1e6, beta)
                assert abs(slope - n * (1 + beta)) < 1e-3


class TestSlopeBounds:
    @pytest.mark.parametrize("n", [2, 3])
    def test_bands_are_sign_definite(self, n):
        b = barriers.derivative_bounds(n)
        assert 0 < b.gamma2 <= b.gamma1
        assert 0 < b.gamma3 <= b.gamma4

    @pytest.mark.parametrize("n", [2, 3])
    def test_band_contains_scan(self, n):
        b = barriers.derivative_bounds(n)
        for alpha in np.logspace(0, 5, 40):
            for beta in np.linspace(0, 1, 11):
                du = barriers.annulus_harmonic_outer_slope(n, alpha, beta)
                dv = barriers.annulus_poisson_outer_slope(n, alpha, beta)
                assert -b.gamma1 <= du <= -b.gamma2 < 0
                assert 0 < b.gamma3 <= dv <= b.gamma4

    def test_band_consistent_with_limit_endpoint_2d(self):
        # the alpha->infinity slope at beta=1 is exactly -1/2, so the
        # certified band must straddle 0.5
        b = barriers.derivative_bounds(2)
        assert b.gamma2 <= 0.5 <= b.gamma1


class TestSupersolution:
    def test_slot_value(self):
        for m in (8.0, 256.0):
            assert barriers.supersolution_profile(1.0, 0.3, k=2.0, m=m, ell=2.0) \
                == pytest.approx(1.0 + 2.0 / m)

    def test_front_value_and_beyond(self):
        t, ell = 0.4, 1.5
        front = 2 + ell * t
        assert barriers.supersolution_profile(front, t, k=1.5, m=32, ell=ell) \
            == pytest.approx(1.0)
        assert barriers.supersolution_profile(front + 1e-9, t, k=1.5, m=32, ell=ell) == 0.0

    def test_interior_inequality_sign(self):
        r = np.linspace(1.01, 2.7, 60)
        t = np.linspace(0.0, 0.7, 9)[:, None]
        lhs, rhs = barriers.supersolution_interior_terms(2, 1.0, 64.0, 1.0,
                                                         r[None, :], t)
        assert lhs.max() <= 0.0 <= rhs.min()
        lhs3, rhs3 = barriers.supersolution_interior_terms(3, 0.7, 512.0, 0.7,
                                                           r[None, :], t)
        assert lhs3.max() <= 0.0 <= rhs3.min()


class TestSubsolution:
    def test_eps_zero_speed(self):
        b = barriers.derivative_bounds(2)
        sub = barriers.subsolution_speed(2, 1.0, 0.0, bounds=b)
        assert sub.ell_sub == pytest.approx(0.5 * b.gamma2)
        assert sub.m_min == np.inf

    def test_linear_in_k(self):
        b = barriers.derivative_bounds(2)
        s1 = barriers.subsolution_speed(2, 1.0, 0.01, bounds=b)
        s2 = barriers.subsolution_speed(2, 2.0, 0.01, bounds=b)
        assert s2.ell_sub == pytest.approx(2 * s1.ell_sub)

    def test_eps_too_large_names_bound(self):
        b = barriers.derivative_bounds(2)
        eps_bad = 2 * b.gamma2 * 2 * 2 / b.gamma4
        with pytest.raises(ConfigError, match="gamma"):
            barriers.subsolution_speed(2, 1.0, eps_bad, bounds=b)

    def test_required_diffusivity_positive_finite(self):
        b = barriers.derivative_bounds(2)
        sub = barriers.subsolution_speed(2, 1.0, 0.01, bounds=b)
        assert 0 < sub.m_min < np.inf
        assert sub.ell_sub > 0


class TestEnvelope:
    def test_radial_scenario_radius(self, radial_coarse):
        env = barriers.supersolution_envelope(radial_coarse)
        assert env.rho == pytest.approx(1.0, abs=0.05)
        assert env.radius(0.0) == pytest.approx(2 * env.rho)
        assert env.radius(0.3) == pytest.approx(2 * env.rho + 0.3 / env.rho)

    def test_speed_is_max_datum(self, radial_coarse):
        env = barriers.supersolution_envelope(radial_coarse)
        assert env.k == radial_coarse.max_datum == env.speed_rescaled
