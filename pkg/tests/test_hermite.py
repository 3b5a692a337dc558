"""Hermite kernels: values, recurrences, quadrature orthogonality, umbral identity."""

import math

import numpy as np
import pytest

from kolmsim.errors import BasisError
from kolmsim.hermite import (
    HermiteContext,
    dirac_partial_norm,
    gauss_hermite_rule,
    gaussian_quadrature,
    h_norm,
    he,
    he_table,
    hermite_triple_product,
    monomial_in_hermite,
    umbral_shift_weight,
)
from kolmsim.multiindex import RegularizationScheme, enumerate_basis


def test_he_low_degrees():
    for x in (0.0, 1.0, 2.5):
        assert float(he(0, x)) == 1.0
        assert float(he(1, x)) == x
        assert float(he(2, x)) == pytest.approx(x * x - 1.0, abs=1e-14)
    assert float(he(3, 2.0)) == pytest.approx(2.0, abs=1e-13)  # 8 - 6


def test_he_table_matches_he():
    x = np.linspace(-3, 3, 7)
    table = he_table(8, x)
    for n in range(9):
        np.testing.assert_allclose(table[n], he(n, x), rtol=1e-13)


def test_derivative_recurrence_by_finite_differences():
    # d/dx He_n = n He_{n-1}, central differences with h = 1e-5
    h = 1e-5
    xs = np.array([-2.3, -0.7, 0.4, 1.9])
    for n in range(1, 13):
        fd = (he(n, xs + h) - he(n, xs - h)) / (2 * h)
        np.testing.assert_allclose(fd, n * he(n - 1, xs), rtol=1e-6)


@pytest.fixture
def ctx2():
    return HermiteContext(rates=np.array([0.1, 0.4]), noise=0.05)


def test_scaling_invariant(ctx2):
    np.testing.assert_allclose(ctx2.scalings ** 2, 2 * ctx2.rates / ctx2.noise, rtol=1e-15)


def test_measure_normalized():
    for n_vars in (1, 2, 3):
        ctx = HermiteContext(rates=np.linspace(0.2, 0.9, n_vars), noise=0.3)
        val = gaussian_quadrature(lambda pts: np.ones(pts.shape[0]), ctx, n_nodes=64)
        assert val == pytest.approx(1.0, abs=1e-10)


def test_h_norm_quadratic_closed_form(ctx2):
    # degree-2 factor: sqrt(2) lambda_i x_i^2 / q - 1/sqrt(2)
    lam, q = ctx2.rates[1], ctx2.noise
    for xval in (0.0, 0.7, -1.3):
        x = np.array([0.2, xval])
        expected = math.sqrt(2) * lam * xval**2 / q - 1 / math.sqrt(2)
        assert float(h_norm((0, 2), x, ctx2)) == pytest.approx(expected, rel=1e-13)


def test_h_norm_odd_vanishes_at_origin(ctx2):
    assert float(h_norm((1, 0), np.array([0.0, 1.0]), ctx2)) == 0.0


def test_h_norm_degree_guard(ctx2):
    with pytest.raises(BasisError):
        h_norm((151, 0), np.array([0.1, 0.1]), ctx2)


def test_orthonormality_by_quadrature(ctx2):
    basis = enumerate_basis(2, RegularizationScheme.by_max_order(4, ctx2.rates), ctx2.rates)
    mats = [m.orders for m in basis]
    for a in mats:
        for b in mats:
            val = gaussian_quadrature(
                lambda pts: h_norm(a, pts, ctx2) * h_norm(b, pts, ctx2), ctx2, 64)
            expected = 1.0 if a == b else 0.0
            assert val == pytest.approx(expected, abs=1e-10)


def test_eigen_relation_of_dissipation_operator():
    # (-q/2 d2/dx2 + lambda x d/dx) H_m = lambda_m H_m, by finite differences.
    # Degrees <= 3 make the fourth derivative vanish, so central FD is exact
    # up to roundoff.
    rng = np.random.default_rng(7)
    ctx = HermiteContext(rates=np.array([0.3, 0.8]), noise=0.4)
    basis = enumerate_basis(2, RegularizationScheme.by_max_order(3, ctx.rates), ctx.rates)
    h = 1e-3
    for m in basis:
        pts = rng.normal(scale=1.2, size=(5, 2))
        val = np.zeros(5)
        for i in range(2):
            ei = np.zeros(2)
            ei[i] = h
            plus, minus = h_norm(m.orders, pts + ei, ctx), h_norm(m.orders, pts - ei, ctx)
            center = h_norm(m.orders, pts, ctx)
            second = (plus - 2 * center + minus) / h**2
            first = (plus - minus) / (2 * h)
            val += -0.5 * ctx.noise * second + ctx.rates[i] * pts[:, i] * first
        np.testing.assert_allclose(val, m.weight * h_norm(m.orders, pts, ctx),
                                   rtol=1e-5, atol=1e-8)


def test_lowering_recurrence_pointwise():
    # d/dx_i H_m = sqrt(2 m_i lambda_i / q) H_{m - e_i}
    rng = np.random.default_rng(11)
    ctx = HermiteContext(rates=np.array([0.2, 0.5]), noise=0.3)
    basis = enumerate_basis(2, RegularizationScheme.by_max_order(4, ctx.rates), ctx.rates)
    h = 1e-6
    for m in basis:
        pts = rng.normal(size=(4, 2))
        for i in m.support():
            ei = np.zeros(2)
            ei[i] = h
            fd = (h_norm(m.orders, pts + ei, ctx) - h_norm(m.orders, pts - ei, ctx)) / (2 * h)
            lower = list(m.orders)
            lower[i] -= 1
            expected = math.sqrt(2 * m.orders[i] * ctx.rates[i] / ctx.noise) \
                * h_norm(lower, pts, ctx)
            np.testing.assert_allclose(fd, expected, rtol=2e-6, atol=1e-9)


def test_raising_recurrence_pointwise():
    # x_i H_m = sqrt(m_i+1)/s_i H_{m+e_i} + sqrt(m_i)/s_i H_{m-e_i}
    rng = np.random.default_rng(13)
    ctx = HermiteContext(rates=np.array([0.2, 0.5]), noise=0.3)
    basis = enumerate_basis(2, RegularizationScheme.by_max_order(3, ctx.rates), ctx.rates)
    for m in basis:
        pts = rng.normal(size=(4, 2))
        for i in range(2):
            s = ctx.scalings[i]
            left = pts[:, i] * h_norm(m.orders, pts, ctx)
            upper = list(m.orders)
            upper[i] += 1
            right = math.sqrt(m.orders[i] + 1) / s * h_norm(upper, pts, ctx)
            if m.orders[i] > 0:
                lower = list(m.orders)
                lower[i] -= 1
                right = right + math.sqrt(m.orders[i]) / s * h_norm(lower, pts, ctx)
            np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


def test_umbral_weight_examples():
    ctx = HermiteContext(rates=np.array([0.2, 0.5]), noise=0.3)
    x = np.array([0.9, -1.1])
    assert float(umbral_shift_weight((1, 0), x, ctx)) == pytest.approx(
        0.9 * math.sqrt(2 * 0.2 / 0.3), rel=1e-14)
    assert float(umbral_shift_weight((2, 1), np.zeros(2), ctx)) == 0.0


def test_umbral_weight_is_gaussian_shift_average():
    # int mu(y) H_m(x + y) dy computed with 64-node quadrature
    ctx = HermiteContext(rates=np.array([1.0]), noise=1.0)
    x = np.array([0.7])
    got = gaussian_quadrature(lambda pts: h_norm((2,), pts + x, ctx), ctx, 64)
    assert got == pytest.approx(0.49 * math.sqrt(2), rel=1e-12)
    assert float(umbral_shift_weight((2,), x, ctx)) == pytest.approx(got, rel=1e-12)


def test_dirac_partial_norm_values():
    assert dirac_partial_norm(2) == pytest.approx(0.5, abs=1e-15)
    assert dirac_partial_norm(3) == pytest.approx(0.5, abs=1e-15)
    assert dirac_partial_norm(0) == 0.0


def test_dirac_term_ratio_approaches_constant():
    # term(n) / (1/sqrt(n)) -> sqrt(2/pi)
    def term(n):
        return dirac_partial_norm(n) - dirac_partial_norm(n - 1)

    ratios = [term(n) * math.sqrt(n) for n in (2000, 4000, 8000)]
    for r in ratios:
        assert r == pytest.approx(math.sqrt(2 / math.pi), rel=2e-3)
    assert abs(ratios[2] - math.sqrt(2 / math.pi)) < abs(ratios[0] - math.sqrt(2 / math.pi))


def test_dirac_partial_sums_increase_without_bound():
    values = [dirac_partial_norm(n) for n in (10, 100, 1000, 10000)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] > 70  # ~ sqrt(2/pi) * 2 * sqrt(n)


def test_triple_product_against_quadrature():
    ctx = HermiteContext(rates=np.array([1.0]), noise=2.0)  # s = 1
    y, w = gauss_hermite_rule(64)
    for a in range(5):
        for b in range(5):
            for c in range(5):
                quad = float(np.sum(
                    w * he(a, y) * he(b, y) * he(c, y)))
                quad /= math.sqrt(math.factorial(a) * math.factorial(b) * math.factorial(c))
                assert hermite_triple_product(a, b, c) == pytest.approx(quad, abs=1e-11)


def test_monomial_expansion_reconstructs_power():
    xs = np.linspace(-2, 2, 9)
    for n in range(7):
        acc = np.zeros_like(xs)
        for p, coeff in monomial_in_hermite(n):
            acc += coeff * he(p, xs)
        np.testing.assert_allclose(acc, xs**n, atol=1e-12)
