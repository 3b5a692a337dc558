"""Basis enumeration, weights, and multiset encoding."""

import itertools
import math

import numpy as np
import pytest

from kolmsim.errors import BasisError, ResourceLimitError
from kolmsim.multiindex import (
    MultiIndex,
    RegularizationScheme,
    decode_multiset,
    encode_multiset,
    enumerate_basis,
    weight,
)


def brute_force_orders(n_vars, k_max):
    """Every non-zero multi-index with |m| <= k_max, as a set of tuples."""
    out = set()
    for vec in itertools.product(range(k_max + 1), repeat=n_vars):
        if 1 <= sum(vec) <= k_max:
            out.add(vec)
    return out


def test_weight_examples():
    lam = [1, 1, 1, 1, 1, 1, 5]
    assert weight((2, 0, 0, 0, 0, 0, 1), lam) == 7.0
    assert weight((0, 0, 1, 0, 0, 0, 0), lam) == 1.0
    assert weight((1, 1), (0.1, 0.1)) == pytest.approx(0.2, abs=1e-15)


def test_weight_dimension_mismatch():
    with pytest.raises(BasisError):
        weight((1, 0), (1.0,))


def test_multiindex_cached_fields():
    m = MultiIndex.from_orders((2, 0, 1), (0.5, 1.0, 2.0))
    assert m.order == 3
    assert m.weight == pytest.approx(2 * 0.5 + 2.0)
    assert m.support() == (0, 2)


def test_order_rule_minimal_basis():
    rates = (1.0, 1.0)
    scheme = RegularizationScheme.by_max_order(1, rates)
    basis = enumerate_basis(2, scheme, rates)
    assert [tuple(row) for row in basis.orders] == [(1, 0), (0, 1)]
    assert len(basis) == 2


def test_enumeration_order_matches_documented_tiebreak():
    rates = (0.1, 0.1)
    basis = enumerate_basis(2, RegularizationScheme.by_max_order(2, rates), rates)
    assert [tuple(row) for row in basis.orders] == [
        (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    np.testing.assert_allclose(basis.weights, [0.1, 0.1, 0.2, 0.2, 0.2])


def test_large_order_rule_count():
    rates = np.ones(40)
    basis = enumerate_basis(40, RegularizationScheme.by_max_order(3, rates), rates)
    assert len(basis) == math.comb(43, 3) - 1 == 12340


def test_weight_rule_single_variable():
    scheme = RegularizationScheme.by_weight(3.5)
    basis = enumerate_basis(1, scheme, (1.0,))
    assert [tuple(row) for row in basis.orders] == [(1,), (2,), (3,)]


def test_weight_rule_float_dust_kept():
    # 8 * 0.1 lands one ulp above 0.8; the cutoff must still keep |m| = 8.
    basis = enumerate_basis(1, RegularizationScheme.by_weight(0.8), (0.1,))
    assert basis.max_degree == 8


def test_count_law_against_brute_force():
    for n_vars in range(1, 6):
        rates = np.ones(n_vars)
        for k in range(1, 5):
            basis = enumerate_basis(n_vars, RegularizationScheme.by_max_order(k, rates), rates)
            expected = brute_force_orders(n_vars, k)
            assert len(basis) == math.comb(n_vars + k, k) - 1
            assert {tuple(row) for row in basis.orders} == expected


def test_count_law_larger_cases():
    for n_vars, k in [(6, 5), (7, 4), (8, 5)]:
        rates = np.ones(n_vars)
        basis = enumerate_basis(n_vars, RegularizationScheme.by_max_order(k, rates), rates)
        assert len(basis) == math.comb(n_vars + k, k) - 1


def test_lookup_is_exact_inverse():
    rates = np.linspace(0.5, 2.0, 4)
    basis = enumerate_basis(4, RegularizationScheme.by_max_order(4, rates), rates)
    for i in range(len(basis)):
        assert basis.position(basis.orders[i]) == i
    m = basis.entry(7)
    assert basis.position(m.orders) == 7


def test_monotone_graded_enumeration():
    rates = np.linspace(0.2, 1.0, 5)
    basis = enumerate_basis(5, RegularizationScheme.by_max_order(4, rates), rates)
    assert np.all(np.diff(basis.degrees) >= 0)


def test_basis_cap_is_loud():
    rates = np.ones(40)
    with pytest.raises(ResourceLimitError):
        enumerate_basis(40, RegularizationScheme.by_max_order(3, rates), rates, cap=1000)


def test_weight_rule_requires_r_equals_R():
    with pytest.raises(BasisError):
        RegularizationScheme(r=1.0, R=2.0, rule="weight")


def test_empty_basis_rejected():
    with pytest.raises(BasisError):
        enumerate_basis(2, RegularizationScheme.by_weight(0.5), (1.0, 1.0))


def test_unsorted_rates_rejected():
    with pytest.raises(BasisError):
        enumerate_basis(2, RegularizationScheme.by_max_order(2, (1.0, 1.0)), (2.0, 1.0))


def test_encode_worked_example():
    # N=7, K=4, m = (2,0,0,0,0,0,1): registers (7,1,1,0), LSB leftmost.
    bits = encode_multiset((2, 0, 0, 0, 0, 0, 1), n_vars=7, max_order=4)
    assert bits == "111" + "100" + "100" + "000"
    assert decode_multiset(bits, 7, 4) == (2, 0, 0, 0, 0, 0, 1)


def test_encode_unit_index():
    bits = encode_multiset((1, 0, 0, 0, 0), n_vars=5, max_order=3)
    q = 3  # ceil(log2(6))
    assert bits[:q] == "100"
    assert bits[q:] == "0" * (2 * q)


def test_encode_overflow():
    with pytest.raises(BasisError):
        encode_multiset((2, 2), n_vars=2, max_order=3)


def test_encode_roundtrip_exhaustive():
    rates = np.ones(5)
    basis = enumerate_basis(5, RegularizationScheme.by_max_order(3, rates), rates)
    for m in basis:
        bits = encode_multiset(m.orders, 5, 3)
        assert decode_multiset(bits, 5, 3) == m.orders


def test_encoding_injective():
    rates = np.ones(7)
    basis = enumerate_basis(7, RegularizationScheme.by_max_order(4, rates), rates)
    seen = {}
    for m in basis:
        bits = encode_multiset(m.orders, 7, 4)
        assert bits not in seen, f"collision between {m.orders} and {seen[bits]}"
        seen[bits] = m.orders


def test_decode_rejects_non_canonical():
    # registers (1,7): increasing order is not a canonical encoding
    bits = "100" + "111" + "000" + "000"
    with pytest.raises(BasisError):
        decode_multiset(bits, 7, 4)
