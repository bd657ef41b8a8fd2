import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracopt import (DomainError, FracOrder, ShapeError, TimeMesh, caputo_left, caputo_right, gamma,
                     kernel_k, l1_weights, rl_integral_left, rl_integral_right)
from fracopt.cost import time_weights

# mpmath: quad of t^2.7 exp(-t) on [0, inf), 50 digits
GAMMA_3_7 = 4.1706517837966031654
# mpmath: 1 / (Gamma(0.25) * 0.01^0.75), 50 digits
KERNEL_025_001 = 8.7220570889250494499

orders = st.floats(min_value=0.05, max_value=0.95)


class TestMeshAndOrder:
    def test_nodes_end_exactly_at_T(self):
        m = TimeMesh(0.7, 3)
        assert m.nodes[-1] == 0.7
        assert m.tau == pytest.approx(0.7 / 3)
        assert m.refine().N == 6

    @pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 1), (1.0, 2.5), (math.inf, 4)])
    def test_bad_mesh(self, T, N):
        with pytest.raises(DomainError):
            TimeMesh(T, N)

    @given(orders, st.integers(2, 300))
    def test_weights_positive_decreasing(self, a, n):
        w = FracOrder(a, n).weights
        assert w[0] == 1.0
        assert np.all(w > 0)
        assert np.all(np.diff(w) < 0)

    def test_weights_read_only(self):
        w = FracOrder(0.5, 8).weights
        with pytest.raises(ValueError):
            w[1] = 3.0

    def test_alpha_one_needs_classical(self):
        with pytest.raises(DomainError):
            FracOrder(1.0, 8)
        w = FracOrder(1.0, 8, classical=True).weights
        assert np.array_equal(w, np.eye(8)[0])

    @pytest.mark.parametrize("a", [0.0, -0.2, 1.2, math.nan])
    def test_bad_order(self, a):
        with pytest.raises(DomainError):
            FracOrder(a, 8)

    def test_l1_weights_formula(self):
        assert np.allclose(l1_weights(0.5, 3), [1.0, math.sqrt(2) - 1, math.sqrt(3) - math.sqrt(2)])


class TestGammaAndKernel:
    def test_gamma_values(self):
        assert gamma(1.0) == 1.0
        assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
        assert gamma(3.7) == pytest.approx(GAMMA_3_7, rel=1e-12)
        assert np.allclose(gamma(np.array([1.0, 2.0, 5.0])), [1.0, 1.0, 24.0], rtol=1e-14)

    @pytest.mark.parametrize("x", [0.0, -1.0, math.inf, math.nan])
    def test_gamma_domain(self, x):
        with pytest.raises(DomainError):
            gamma(x)

    def test_kernel(self):
        assert kernel_k(1.0, 5.0) == 1.0
        assert kernel_k(0.5, 1.0) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-14)
        assert kernel_k(0.25, 0.01) == pytest.approx(KERNEL_025_001, rel=1e-12)
        with pytest.raises(DomainError):
            kernel_k(0.5, 0.0)


class TestRLIntegral:
    def test_theta_one_is_integration(self):
        m = TimeMesh(2.0, 16)
        assert np.allclose(rl_integral_left(1.0, np.ones(17), m), m.nodes, atol=1e-14)
        assert np.allclose(rl_integral_right(1.0, np.ones(17), m), 2.0 - m.nodes, atol=1e-14)

    @pytest.mark.parametrize("theta", [0.2, 0.5, 0.9])
    def test_constant_exact(self, theta):
        # the interpolant of a constant is exact, so only rounding remains
        m = TimeMesh(1.0, 50)
        exact = m.nodes**theta / math.gamma(1 + theta)
        assert np.allclose(rl_integral_left(theta, np.ones(51), m), exact, atol=1e-13)
        assert np.allclose(rl_integral_right(theta, np.ones(51), m), exact[::-1], atol=1e-13)

    def test_linear_exact(self):
        m = TimeMesh(1.0, 40)
        exact = m.nodes**1.3 / math.gamma(2.3)
        assert np.allclose(rl_integral_left(0.3, m.nodes, m), exact, atol=1e-13)

    def test_quadratic_second_order(self):
        errs = []
        for N in (32, 64, 128):
            m = TimeMesh(1.0, N)
            exact = 2 * m.nodes**2.5 / math.gamma(3.5)
            errs.append(np.max(np.abs(rl_integral_left(0.5, m.nodes**2, m) - exact)))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(rates > 1.9)

    def test_semigroup_for_data_vanishing_at_zero(self):
        m = TimeMesh(1.0, 256)
        t = m.nodes
        f = 0.5 * t - 2 * t**2 + 0.7 * t**3
        err = rl_integral_left(0.3, rl_integral_left(0.4, f, m), m) - rl_integral_left(0.7, f, m)
        assert np.max(np.abs(err)) < 5e-6

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 1.0), st.integers(2, 60), st.integers(0, 2**31))
    def test_right_is_mirror(self, theta, N, seed):
        m = TimeMesh(1.5, N)
        f = np.random.default_rng(seed).standard_normal((N + 1, 3))
        assert np.array_equal(rl_integral_right(theta, f, m), rl_integral_left(theta, f[::-1], m)[::-1])
        assert np.all(rl_integral_right(theta, f, m)[-1] == 0.0)
        assert np.all(rl_integral_left(theta, f, m)[0] == 0.0)

    @settings(max_examples=30, deadline=None)
    @given(orders, st.integers(2, 80), st.integers(0, 2**31))
    def test_sup_bound(self, a, N, seed):
        T = 2.0
        m = TimeMesh(T, N)
        f = np.random.default_rng(seed).uniform(-1, 1, N + 1)
        bound = T**a / (a * math.gamma(a)) * np.max(np.abs(f))
        assert np.max(np.abs(rl_integral_left(a, f, m))) <= bound * (1 + 1e-12)

    def test_errors(self):
        m = TimeMesh(1.0, 4)
        with pytest.raises(DomainError):
            rl_integral_left(0.0, np.ones(5), m)
        with pytest.raises(ShapeError):
            rl_integral_left(0.5, np.ones(4), m)
        with pytest.raises(DomainError):
            rl_integral_left(0.5, [1, 2, np.nan, 1, 1], m)


class TestCaputo:
    def test_constant_is_zero(self):
        m = TimeMesh(1.0, 20)
        fo = FracOrder(0.4, 20)
        d = caputo_left(fo, np.full(21, 3.0), m)
        assert math.isnan(d[0]) and np.all(d[1:] == 0)
        d = caputo_right(fo, np.full(21, 3.0), m)
        assert math.isnan(d[-1]) and np.all(d[:-1] == 0)

    @pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
    def test_exact_on_linear(self, a):
        m = TimeMesh(1.0, 64)
        fo = FracOrder(a, 64)
        t = m.nodes
        ref = t ** (1 - a) / math.gamma(2 - a)
        assert np.allclose(caputo_left(fo, t, m)[1:], ref[1:], rtol=1e-12, atol=1e-13)
        assert np.allclose(caputo_right(fo, 1.0 - t, m)[:-1], ref[::-1][:-1], rtol=1e-12, atol=1e-13)

    def test_quadratic_rate(self):
        a = 0.5
        errs = []
        for N in (64, 128, 256, 512):
            m = TimeMesh(1.0, N)
            d = caputo_left(FracOrder(a, N), m.nodes**2, m)
            errs.append(abs(d[-1] - 2 / math.gamma(3 - a)))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(np.abs(rates - (2 - a)) < 0.1)

    @settings(max_examples=25, deadline=None)
    @given(orders, st.integers(2, 60), st.integers(0, 2**31))
    def test_discrete_duality(self, a, N, seed):
        # trapezoid pairing of the L1 operators is an exact discrete integration by parts
        rng = np.random.default_rng(seed)
        m = TimeMesh(1.0, N)
        f = rng.standard_normal(N + 1)
        g = rng.standard_normal(N + 1)
        f[-1] = 0.0
        g[0] = 0.0
        fo = FracOrder(a, N)
        w = time_weights(m)
        lhs = np.sum(w * f * np.nan_to_num(caputo_left(fo, g, m)))
        rhs = np.sum(w * g * np.nan_to_num(caputo_right(fo, f, m)))
        scale = np.sum(w * np.abs(f) * np.abs(np.nan_to_num(caputo_left(fo, g, m)))) + 1e-300
        assert abs(lhs - rhs) <= 1e-12 * scale

    def test_inverts_integral_away_from_origin(self):
        m = TimeMesh(1.0, 512)
        t = m.nodes
        f = 0.5 * t - 2 * t**2 + 0.7 * t**3
        d = caputo_left(FracOrder(0.3, 512), rl_integral_left(0.3, f, m), m)
        assert np.max(np.abs(d[1:] - f[1:])) < 1e-4

    def test_order_mismatch(self):
        with pytest.raises(ShapeError):
            caputo_left(FracOrder(0.5, 4), np.zeros(9), TimeMesh(1.0, 8))

    def test_space_time_fields(self):
        m = TimeMesh(1.0, 10)
        fo = FracOrder(0.6, 10)
        f = np.random.default_rng(0).standard_normal((11, 4))
        full = caputo_left(fo, f, m)
        for j in range(4):
            assert np.allclose(full[1:, j], caputo_left(fo, f[:, j], m)[1:], rtol=1e-13, atol=1e-13)
