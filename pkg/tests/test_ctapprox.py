import math

import numpy as np
import pytest

from rld.ctapprox import (
    RbmParams,
    ct_terminal_cost,
    ct_terminal_subgradient,
    h_func,
    h_prime,
    rbm_density,
    rbm_long_run,
    simulate_reflected_walk,
)
from rld.rng import run_generator


class TestHFunctions:
    def test_values_at_zero(self):
        assert h_func(0.0) == 1.0
        assert h_prime(0.0) == -0.5

    def test_log_two(self):
        assert h_func(math.log(2.0)) == pytest.approx(math.log(2.0), rel=1e-14)

    def test_monotone_decreasing_positive(self):
        xs = np.linspace(-20.0, 20.0, 401)
        hs = h_func(xs)
        assert np.all(hs > 0.0)
        assert np.all(np.diff(hs) < 0.0)
        assert np.all(h_prime(xs) < 0.0)

    @pytest.mark.parametrize("x", [-10.0, -1.0, -1e-5, 1e-5, 1.0, 10.0])
    def test_derivative_matches_finite_difference(self, x):
        step = 1e-6 * max(abs(x), 1.0)
        fd = (h_func(x + step) - h_func(x - step)) / (2 * step)
        assert h_prime(x) == pytest.approx(fd, abs=1e-8)

    def test_series_exact_continuity_at_switchover(self):
        # both branches evaluated at the cutoff must agree to 1e-12
        for x in (1e-3, -1e-3):
            exact_h = x / np.expm1(x)
            series_h = 1.0 - x / 2.0 + x * x / 12.0
            assert abs(exact_h - series_h) < 1e-12
            em1 = np.expm1(x)
            exact_hp = (em1 - x * np.exp(x)) / (em1 * em1)
            series_hp = -0.5 + x / 6.0 - x**3 / 180.0
            assert abs(exact_hp - series_hp) < 1e-12

    def test_extreme_arguments(self):
        assert h_func(1000.0) == 0.0
        assert h_func(-1000.0) == pytest.approx(1000.0)
        assert h_prime(1000.0) == 0.0
        assert h_prime(-1000.0) == pytest.approx(-1.0)


class TestLongRunRates:
    def test_zero_drift(self):
        v, q = rbm_long_run(RbmParams(0.0, 1.0, 1.0))
        assert v == pytest.approx(0.5)
        assert q == pytest.approx(-0.5)

    def test_unit_drift(self):
        v, q = rbm_long_run(RbmParams(1.0, 1.0, 1.0))
        assert v == pytest.approx(1.0 / (math.e**2 - 1.0), rel=1e-12)

    def test_flow_balance_grid(self):
        for mu in (-2.0, -0.1, 0.0, 0.1, 2.0):
            for sig in (0.3, 1.0, 2.5):
                for B in (0.2, 1.0, 4.0):
                    v, q = rbm_long_run(RbmParams(mu, sig, B))
                    assert abs(mu + v + q) < 1e-12

    def test_continuity_near_zero_drift(self):
        v0, q0 = rbm_long_run(RbmParams(0.0, 1.0, 1.0))
        v1, q1 = rbm_long_run(RbmParams(1e-9, 1.0, 1.0))
        assert v1 == pytest.approx(v0, abs=1e-8)
        assert q1 == pytest.approx(q0, abs=1e-8)

    def test_simulation_oracle_quick(self):
        p = RbmParams(0.5, 1.0, 1.0)
        v, _ = rbm_long_run(p)
        vr, _ = simulate_reflected_walk(p, 1e-2, 500_000, run_generator(4, 77))
        assert vr == pytest.approx(v, rel=0.02)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            RbmParams(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            RbmParams(0.0, 1.0, 0.0)


class TestDensity:
    def test_uniform_at_zero_drift(self):
        p = RbmParams(0.0, 1.0, 2.0)
        zs = np.linspace(0.0, 2.0, 5)
        assert np.allclose(rbm_density(zs, p), 0.5)

    def test_normalization(self):
        from scipy.integrate import simpson

        for mu in (-1.0, 0.0, 0.7):
            p = RbmParams(mu, 1.3, 1.7)
            zs = np.linspace(0.0, p.barrier, 20_001)
            total = simpson(rbm_density(zs, p), x=zs)
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_positive_drift_tilts_upward(self):
        p = RbmParams(0.8, 1.0, 1.0)
        zs = np.linspace(0.0, 1.0, 50)
        dens = rbm_density(zs, p)
        assert np.all(np.diff(dens) > 0.0)

    def test_zero_outside_barrier(self):
        p = RbmParams(0.2, 1.0, 1.0)
        assert rbm_density(-0.1, p) == 0.0
        assert rbm_density(1.1, p) == 0.0


class TestCtTerminal:
    def test_center_values(self):
        c, B, s2 = 1000.0, 0.5, 0.25
        assert ct_terminal_cost(1.0, 1.0, s2, B, c) == pytest.approx(c * s2 / (2 * B))
        assert ct_terminal_subgradient(1.0, 1.0, s2, B, c) == pytest.approx(-c / 2)

    def test_scaling_invariance_bitwise(self):
        B, s2 = 0.25, 0.125  # dyadic so alpha scaling is exact in binary
        xs = np.linspace(0.5, 1.5, 11)
        base_c = ct_terminal_cost(xs, 1.0, s2, B, 1000.0)
        base_g = ct_terminal_subgradient(xs, 1.0, s2, B, 1000.0)
        for alpha in (0.5, 2.0, 10.0):
            c2 = ct_terminal_cost(xs, 1.0, alpha * s2, alpha * B, 1000.0)
            g2 = ct_terminal_subgradient(xs, 1.0, alpha * s2, alpha * B, 1000.0)
            assert np.array_equal(base_c, c2)
            assert np.array_equal(base_g, g2)

    def test_convexity(self):
        xs = np.linspace(-2.0, 4.0, 301)
        cs = ct_terminal_cost(xs, 1.0, 0.2, 0.3, 1000.0)
        second = np.diff(cs, 2)
        assert np.all(second > -1e-9)

    def test_subgradient_is_cost_derivative(self):
        x = 1.3
        d = 1e-6
        fd = (
            ct_terminal_cost(x + d, 1.0, 0.2, 0.3, 1000.0)
            - ct_terminal_cost(x - d, 1.0, 0.2, 0.3, 1000.0)
        ) / (2 * d)
        assert ct_terminal_subgradient(x, 1.0, 0.2, 0.3, 1000.0) == pytest.approx(fd, rel=1e-6)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            ct_terminal_cost(1.0, 1.0, 0.0, 0.5, 1000.0)
        with pytest.raises(ValueError):
            ct_terminal_subgradient(1.0, 1.0, 0.5, 0.0, 1000.0)
