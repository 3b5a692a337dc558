"""Initial states, coherent readout, norm identities, expectation readout."""

import math

import numpy as np
import pytest

from kolmsim.errors import BasisError
from kolmsim.hermite import HermiteContext, gaussian_quadrature
from kolmsim.multiindex import RegularizationScheme, enumerate_basis
from kolmsim.states import (
    MonomialObservable,
    combination_state,
    expectation,
    initial_state,
    readout_norm_sq,
    readout_state,
    readout_truncation_error,
    truncation_order_for,
)


@pytest.fixture
def ctx():
    return HermiteContext(rates=np.array([0.1, 0.4]), noise=0.02)


def basis_for(ctx, K):
    return enumerate_basis(ctx.n_vars,
                           RegularizationScheme.by_max_order(K, ctx.rates),
                           ctx.rates)


def test_initial_state_linear_observable(ctx):
    basis = basis_for(ctx, 3)
    psi = initial_state(MonomialObservable((1, 0), ctx), basis)
    expected = math.sqrt(ctx.noise / (2 * ctx.rates[0]))
    assert psi.coefficients[basis.position((1, 0))] == pytest.approx(expected, rel=1e-14)
    assert np.count_nonzero(psi.coefficients) == 1


def test_initial_state_square_observable(ctx):
    basis = basis_for(ctx, 3)
    u0 = MonomialObservable((0, 2), ctx)
    psi = initial_state(u0, basis)
    lam = ctx.rates[1]
    assert psi.coefficients[basis.position((0, 2))] == pytest.approx(
        ctx.noise / (math.sqrt(2) * lam), rel=1e-14)
    assert u0.mean() == pytest.approx(ctx.noise / (2 * lam), rel=1e-14)
    assert np.count_nonzero(psi.coefficients) == 1


def test_initial_state_norm_closed_form(ctx):
    basis = basis_for(ctx, 8)
    for exponents in [(1, 0), (0, 2), (2, 1), (1, 3), (2, 2), (0, 4)]:
        u0 = MonomialObservable(exponents, ctx)
        psi = initial_state(u0, basis)
        assert psi.norm_sq() == pytest.approx(u0.centered_norm_sq(), rel=1e-12)


def test_initial_state_norm_against_quadrature(ctx):
    u0 = MonomialObservable((2, 0), ctx)
    mean = u0.mean()
    quad = gaussian_quadrature(lambda pts: (u0(pts) - mean) ** 2, ctx, 64)
    assert u0.centered_norm_sq() == pytest.approx(quad, rel=1e-12)


def test_initial_state_degree_overflow(ctx):
    basis = basis_for(ctx, 2)
    with pytest.raises(BasisError):
        initial_state(MonomialObservable((2, 1), ctx), basis)


def test_observable_mean_examples(ctx):
    assert MonomialObservable((1, 0), ctx).mean() == 0.0
    assert MonomialObservable((1, 2), ctx).mean() == 0.0
    sig1 = ctx.noise / (2 * ctx.rates[0])
    sig2 = ctx.noise / (2 * ctx.rates[1])
    assert MonomialObservable((2, 2), ctx).mean() == pytest.approx(sig1 * sig2)
    assert MonomialObservable((4, 0), ctx).mean() == pytest.approx(3 * sig1 ** 2)


def test_observable_degree_cap(ctx):
    with pytest.raises(BasisError):
        MonomialObservable((4, 3), ctx)
    with pytest.raises(BasisError):
        MonomialObservable((0, 0), ctx)


def test_combination_state_linearity(ctx):
    basis = basis_for(ctx, 3)
    u_a = MonomialObservable((1, 0), ctx)
    u_b = MonomialObservable((0, 1), ctx)
    combo = combination_state([(2.0, u_a), (-0.5, u_b)], basis)
    manual = 2.0 * initial_state(u_a, basis).coefficients \
        - 0.5 * initial_state(u_b, basis).coefficients
    np.testing.assert_allclose(combo.coefficients, manual, rtol=1e-15)


def test_readout_unit_coefficient(ctx):
    basis = basis_for(ctx, 3)
    x = np.array([0.4, -0.2])
    state = readout_state(x, basis, truncation=3, ctx=ctx)
    expected = x[0] * math.sqrt(2 * ctx.rates[0] / ctx.noise)
    assert state.coefficients[basis.position((1, 0))] == pytest.approx(expected)


def test_readout_zero_point(ctx):
    basis = basis_for(ctx, 3)
    state = readout_state(np.zeros(2), basis, truncation=3, ctx=ctx)
    assert np.all(state.coefficients == 0.0)


def test_readout_norm_identity_value():
    ctx = HermiteContext(rates=np.array([0.1, 0.1]), noise=0.02)
    x = np.array([1.0, 0.0])
    assert readout_norm_sq(x, ctx) == pytest.approx(math.exp(10.0), rel=1e-12)


def test_readout_norm_identity_truncated():
    rng = np.random.default_rng(21)
    for _ in range(10):
        rates = np.sort(rng.uniform(0.05, 0.5, size=3))
        q = rng.uniform(0.05, 0.3)
        ctx = HermiteContext(rates=rates, noise=q)
        x = np.zeros(3)
        live = rng.integers(0, 3)
        # keep q^{-1} ||x||_lambda^2 <= 6
        x[live] = math.sqrt(rng.uniform(0.5, 6.0) * q / rates[live])
        k = truncation_order_for(x, ctx, eps=1e-6 * math.sqrt(readout_norm_sq(x, ctx)))
        ratio = readout_norm_sq(x, ctx, truncation=k) / readout_norm_sq(x, ctx)
        # containment is mathematically one-sided; allow one ulp of dust above 1
        assert 1 - 1e-10 <= ratio <= 1.0 + 1e-12


def test_readout_truncation_bound_honored():
    ctx = HermiteContext(rates=np.array([0.2, 0.3]), noise=0.1)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.normal(size=2) * 0.8
        for eps_rel in (1e-2, 1e-4, 1e-8):
            eps = eps_rel * math.sqrt(readout_norm_sq(x, ctx))
            k = truncation_order_for(x, ctx, eps)
            assert readout_truncation_error(x, ctx, k) <= eps


def test_expectation_time_zero_linear(ctx):
    basis = basis_for(ctx, 3)
    psi0 = initial_state(MonomialObservable((1, 0), ctx), basis)
    for x1 in (0.7, -1.2, 0.0):
        x = np.array([x1, 0.0])
        assert expectation(psi0, x, truncation=3, ctx=ctx) == pytest.approx(x1, abs=1e-14)


def test_expectation_zero_state(ctx):
    basis = basis_for(ctx, 2)
    from kolmsim.evolution import KEState

    psi = KEState(np.zeros(len(basis)), basis)
    assert expectation(psi, np.array([0.3, 0.4]), 2, ctx) == 0.0


def test_expectation_dimension_mismatch(ctx):
    basis = basis_for(ctx, 2)
    psi = initial_state(MonomialObservable((1, 0), ctx), basis)
    with pytest.raises(BasisError):
        expectation(psi, np.array([1.0, 0.0, 0.0]), 2, ctx)


def test_expectation_umbral_consistency(ctx):
    # <readout(x), psi(0)> + mean = int mu(z) u0(x + z) dz
    basis = basis_for(ctx, 4)
    rng = np.random.default_rng(3)
    for exponents in [(1, 0), (2, 0), (1, 1), (2, 2), (1, 3), (0, 4)]:
        u0 = MonomialObservable(exponents, ctx)
        psi0 = initial_state(u0, basis)
        x = rng.normal(size=2) * 0.5
        got = expectation(psi0, x, truncation=4, ctx=ctx,
                          include_mean=True, mean=u0.mean())
        want = gaussian_quadrature(lambda pts: u0(pts + x), ctx, 64)
        assert got == pytest.approx(want, abs=1e-8)
