"""Multi-index bookkeeping for truncated Hermite bases.

A multi-index assigns a Hermite degree to each of the N variables.  The
all-zero index (the constant function) is excluded everywhere: the
coefficient spaces used by the solver contain only zero-mean functions.
Bases are enumerated in a fixed graded order (ascending total degree,
ties broken by the multiset order of the variables) so that operator
block structure by total degree is visible and runs are reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BasisError, ResourceLimitError

DEFAULT_BASIS_CAP = 2_000_000

# Truncation rules.  ORDER keeps |m| <= r/lambda_1 and is compatible with a
# degree-preserving linear drift; WEIGHT keeps lambda_m <= r and is only
# valid when the linear drift vanishes.
ORDER_RULE = "order"
WEIGHT_RULE = "weight"

# Relative slack when comparing float weight sums against the cutoff r
# (0.1 + 0.1 + ... accumulates one-ulp dust that must not evict an index).
_WEIGHT_TOL = 1e-9


def _check_rates(rates) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1 or rates.size < 1:
        raise BasisError("rates must be a non-empty 1-d vector")
    if np.any(rates <= 0.0):
        raise BasisError("dissipation rates must be strictly positive")
    if np.any(np.diff(rates) < 0.0):
        raise BasisError("dissipation rates must be sorted non-decreasing")
    return rates


def weight(orders, rates) -> float:
    """Weight lambda_m = sum_i m_i lambda_i of a multi-index."""
    orders = np.asarray(orders, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if orders.shape != rates.shape:
        raise BasisError("multi-index and rate vector dimensions differ")
    return float(orders @ rates)


@dataclass(frozen=True)
class MultiIndex:
    """A multi-index with its cached total degree and weight."""

    orders: tuple
    order: int
    weight: float

    @classmethod
    def from_orders(cls, orders, rates) -> "MultiIndex":
        orders = tuple(int(v) for v in orders)
        if any(v < 0 for v in orders):
            raise BasisError("multi-index entries must be non-negative")
        return cls(orders=orders, order=sum(orders), weight=weight(orders, rates))

    def support(self) -> tuple:
        return tuple(i for i, v in enumerate(self.orders) if v > 0)


@dataclass(frozen=True)
class RegularizationScheme:
    """Truncation parameters (r, R) plus the rule that realizes them."""

    r: float
    R: float
    rule: str

    def __post_init__(self):
        if not (0.0 < self.r <= self.R):
            raise BasisError("scheme requires 0 < r <= R")
        if self.rule not in (ORDER_RULE, WEIGHT_RULE):
            raise BasisError(f"unknown truncation rule {self.rule!r}")
        if self.rule == WEIGHT_RULE and self.r != self.R:
            raise BasisError("weight-cutoff rule requires r == R")

    @classmethod
    def by_max_order(cls, max_order: int, rates) -> "RegularizationScheme":
        """Order-cutoff scheme keeping |m| <= max_order, with R = r*(lambda_N/lambda_1)."""
        rates = _check_rates(rates)
        if max_order < 1:
            raise BasisError("max_order must be >= 1")
        r = max_order * float(rates[0])
        return cls(r=r, R=r * float(rates[-1] / rates[0]), rule=ORDER_RULE)

    @classmethod
    def by_weight(cls, r: float) -> "RegularizationScheme":
        """Weight-cutoff scheme keeping lambda_m <= r.  Only valid when b == 0."""
        return cls(r=float(r), R=float(r), rule=WEIGHT_RULE)

    def max_order(self, rates) -> int:
        rates = _check_rates(rates)
        return int(math.floor(self.r / rates[0] * (1.0 + _WEIGHT_TOL)))


class BasisSet:
    """Ordered, indexed enumeration of a finite multi-index truncation."""

    def __init__(self, orders_array: np.ndarray, rates: np.ndarray,
                 scheme: RegularizationScheme):
        self.orders = np.ascontiguousarray(orders_array, dtype=np.int32)
        self.rates = np.asarray(rates, dtype=float)
        self.scheme = scheme
        self.degrees = self.orders.sum(axis=1)
        self.weights = self.orders @ self.rates
        self._lookup = {row.tobytes(): i for i, row in enumerate(self.orders)}

    def __len__(self) -> int:
        return self.orders.shape[0]

    @property
    def n_vars(self) -> int:
        return self.orders.shape[1]

    @property
    def max_degree(self) -> int:
        """K, the largest total Hermite degree present."""
        return int(self.degrees.max()) if len(self) else 0

    def _key(self, orders) -> bytes:
        arr = np.asarray(orders, dtype=np.int32)
        if arr.shape != (self.n_vars,):
            raise BasisError("multi-index dimension mismatch")
        return arr.tobytes()

    def position(self, orders) -> int:
        try:
            return self._lookup[self._key(orders)]
        except KeyError:
            raise BasisError(f"multi-index {tuple(orders)} not in basis") from None

    def get(self, orders, default: int = -1) -> int:
        return self._lookup.get(self._key(orders), default)

    def __contains__(self, orders) -> bool:
        return self.get(orders) >= 0

    def entry(self, i: int) -> MultiIndex:
        row = self.orders[i]
        return MultiIndex(orders=tuple(int(v) for v in row),
                          order=int(self.degrees[i]), weight=float(self.weights[i]))

    def __iter__(self):
        return (self.entry(i) for i in range(len(self)))


def _orders_by_degree(n_vars: int, degree: int):
    """Yield order vectors of fixed total degree in the enumeration order.

    combinations_with_replacement over variable labels lists each degree-g
    multiset once, lowest variables first, which is the documented tie-break
    ((1,0) before (0,1), (2,0) before (1,1) before (0,2)).
    """
    for combo in itertools.combinations_with_replacement(range(n_vars), degree):
        vec = [0] * n_vars
        for v in combo:
            vec[v] += 1
        yield vec


def enumerate_basis(n_vars: int, scheme: RegularizationScheme, rates,
                    cap: int = DEFAULT_BASIS_CAP) -> BasisSet:
    """Enumerate the truncated multi-index set for the given scheme.

    Raises ResourceLimitError if the basis would exceed `cap` entries; the
    failure is loud rather than a silent truncation.
    """
    rates = _check_rates(rates)
    if rates.size != n_vars:
        raise BasisError("rate vector length must equal the variable count")
    k_max = scheme.max_order(rates)
    if k_max < 1:
        raise BasisError("cutoff r is below lambda_1: the basis would be empty")

    if scheme.rule == ORDER_RULE:
        total = math.comb(n_vars + k_max, k_max) - 1
        if total > cap:
            raise ResourceLimitError(
                f"basis of {total} entries exceeds the cap of {cap}")

    rows = []
    cutoff = scheme.r * (1.0 + _WEIGHT_TOL)
    for degree in range(1, k_max + 1):
        for vec in _orders_by_degree(n_vars, degree):
            if scheme.rule == WEIGHT_RULE and float(np.dot(vec, rates)) > cutoff:
                continue
            rows.append(vec)
            if len(rows) > cap:
                raise ResourceLimitError(
                    f"basis exceeds the cap of {cap} entries")
    return BasisSet(np.array(rows, dtype=np.int32), rates, scheme)


def register_width(n_vars: int) -> int:
    """Bits needed to store one variable label (0 means 'empty slot')."""
    return int(n_vars).bit_length()


def encode_multiset(orders, n_vars: int, max_order: int) -> str:
    """Encode a multi-index as K fixed-width registers of variable labels.

    The multi-index is read as a multiset holding m_i copies of label i+1;
    register j stores the j-th largest label (0-padded), each register
    written least-significant bit first.
    """
    orders = tuple(int(v) for v in orders)
    if len(orders) != n_vars:
        raise BasisError("multi-index dimension mismatch")
    total = sum(orders)
    if total > max_order:
        raise BasisError(f"|m| = {total} overflows the {max_order}-register encoding")
    labels = []
    for var, mult in enumerate(orders):
        labels.extend([var + 1] * mult)
    labels.sort(reverse=True)
    labels.extend([0] * (max_order - len(labels)))
    q = register_width(n_vars)
    return "".join("1" if (val >> b) & 1 else "0"
                   for val in labels for b in range(q))


def decode_multiset(bits: str, n_vars: int, max_order: int):
    """Invert encode_multiset.  Rejects non-canonical registers."""
    q = register_width(n_vars)
    if len(bits) != q * max_order or set(bits) - {"0", "1"}:
        raise BasisError("bit string has the wrong length or alphabet")
    labels = []
    for j in range(max_order):
        chunk = bits[j * q:(j + 1) * q]
        labels.append(sum(1 << b for b, c in enumerate(chunk) if c == "1"))
    if any(v > n_vars for v in labels):
        raise BasisError("register value exceeds the variable count")
    if any(labels[j] < labels[j + 1] for j in range(max_order - 1)):
        raise BasisError("registers are not sorted in non-increasing order")
    orders = [0] * n_vars
    for val in labels:
        if val > 0:
            orders[val - 1] += 1
    return tuple(orders)
