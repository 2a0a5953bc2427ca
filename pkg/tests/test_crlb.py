import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sawtooth_sync.crlb import (G_FUNCTIONS, UnwrappedParams, crlb_offset_known_line,
                                crlb_physical, crlb_rho, expected_neg_hessian, fisher,
                                fisher_numeric, gradient, inverse_fisher,
                                log_likelihood, map_physical_to_unwrapped, to_db)
from sawtooth_sync.model import NoiseParams, physical_to_generic

from conftest import table_one_draw


def unwrapped(rng, N=1000):
    p = table_one_draw(rng)
    g = physical_to_generic(p)
    nz = NoiseParams.from_snr(rng.uniform(0, 40), rng.uniform(0, 30), g.psi)
    return p, map_physical_to_unwrapped(p, nz, N)


class TestFisher:
    def test_inverse(self, rng):
        for _ in range(50):
            _, u = unwrapped(rng, int(rng.integers(2, 5000)))
            F, Fi = fisher(u), inverse_fisher(u)
            D = np.diag(1 / np.sqrt(np.diag(F)))
            # compare in the balanced basis so both entries are O(1)
            prod = (D @ F @ D) @ (np.linalg.inv(D) @ Fi @ np.linalg.inv(D))
            assert_allclose(prod, np.eye(2), atol=1e-9)

    def test_matches_numeric(self, rng):
        for _ in range(50):
            _, u = unwrapped(rng, int(rng.integers(2, 3000)))
            assert_allclose(fisher(u), fisher_numeric(u), rtol=1e-10)

    def test_matches_expected_hessian(self, rng):
        for _ in range(20):
            _, u = unwrapped(rng)
            assert_allclose(expected_neg_hessian(u), fisher(u), rtol=1e-5)

    def test_constant_noise_textbook(self):
        # plain linear regression: Var(slope) = 12 s^2 / (N (N^2 - 1))
        u = UnwrappedParams(1.0, 0.5, 2.0, 0.0, 0.0, 100)
        Fi = inverse_fisher(u)
        assert Fi[1, 1] == pytest.approx(12 * 4 / (100 * (100**2 - 1)), rel=1e-12)
        assert Fi[0, 0] == pytest.approx(2 * (2 * 100 - 1) * 4 / (100 * 101), rel=1e-12)

    def test_ols_attains_bound(self):
        u = UnwrappedParams(0.3, -0.01, 0.5, 0.0, 0.0, 200)
        rng = np.random.default_rng(4)
        n = np.arange(200)
        Y = u.alpha_tilde + u.beta_tilde * n + 0.5 * rng.standard_normal((4000, 200))
        coef = np.polynomial.polynomial.polyfit(n, Y.T, 1)
        cov = np.cov(coef)
        assert_allclose(np.diag(cov), np.diag(inverse_fisher(u)), rtol=0.08)

    def test_log_likelihood_peak(self):
        u = UnwrappedParams(0.0, 1.0, 1.0, 0.0, 0.0, 10)
        y = np.arange(10.0)
        assert log_likelihood(u, y) == pytest.approx(-5 * math.log(2 * math.pi))

    def test_validation(self):
        with pytest.raises(ValueError):
            UnwrappedParams(0, 0, 1, 0, 0, 1)
        with pytest.raises(ValueError):
            UnwrappedParams(0, 0, 0, 0, 0, 10)


class TestGradients:
    @pytest.mark.parametrize("which", ["f_d", "delta_rt", "phi_S"])
    def test_finite_differences(self, rng, which):
        for _ in range(30):
            p, u = unwrapped(rng)
            g = G_FUNCTIONS[which]
            ha = 1e-6 * p.T_M
            hb = 1e-6 * p.T_M
            a, b = u.alpha_tilde, u.beta_tilde
            fd = np.array([
                (g(a + ha, b, p) - g(a - ha, b, p)) / (2 * ha),
                (g(a, b + hb, p) - g(a, b - hb, p)) / (2 * hb),
            ])
            an = gradient(which, p)
            scale = np.abs(an).max()
            assert_allclose(fd, an, rtol=1e-6, atol=1e-6 * scale)

    def test_g_functions_invert_mapping(self, rng):
        for _ in range(30):
            p, u = unwrapped(rng)
            a, b = u.alpha_tilde, u.beta_tilde
            assert G_FUNCTIONS["f_d"](a, b, p) == pytest.approx(p.f_d, rel=1e-9, abs=1e-9)
            assert G_FUNCTIONS["delta_rt"](a, b, p) == pytest.approx(p.delta_rt, rel=1e-6)
            assert G_FUNCTIONS["phi_S"](a, b, p) == pytest.approx(p.phi_S, abs=1e-6)

    def test_unknown(self, example_params):
        with pytest.raises(ValueError):
            gradient("rho", example_params)


class TestBounds:
    def test_fd_scales_as_N_cubed(self, rng):
        p, u = unwrapped(rng, 2000)
        r = crlb_physical(u.with_N(4000), p, "f_d") / crlb_physical(u, p, "f_d")
        assert r == pytest.approx(0.125, rel=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5000))
    def test_monotone_in_N(self, seed, N):
        p, u = unwrapped(np.random.default_rng(seed), N)
        for which in ("f_d", "delta_rt", "phi_S"):
            assert crlb_physical(u.with_N(N + 1), p, which) < crlb_physical(u, p, which)

    def test_joint_request_rejected(self, rng):
        p, u = unwrapped(rng)
        with pytest.raises(ValueError):
            crlb_physical(u, p, ["delta_rt", "phi_S"])
        assert crlb_physical(u, p, ["f_d"]) == crlb_physical(u, p, "f_d")

    def test_rho_from_delta(self, rng):
        p, u = unwrapped(rng)
        assert crlb_rho(u, p) == pytest.approx((p.c / 2) ** 2 * crlb_physical(u, p, "delta_rt"))

    def test_offset_known_line(self):
        assert crlb_offset_known_line(2.0, 0.1, 0.05, 10) == pytest.approx((0.01 + 0.01) / 10)
        assert crlb_offset_known_line(2.0, 0.1, 0.05, 10, "gamma") == pytest.approx(0.0005)
        with pytest.raises(ValueError):
            crlb_offset_known_line(1.0, 0.1, 0.1, 10, "beta")

    def test_to_db(self):
        assert_allclose(to_db([1.0, 0.01, 1000.0]), [0.0, -20.0, 30.0])
