"""Sparse assembly of the projected Kolmogorov operators.

Three operators act on the coefficient space: a diagonal dissipation
operator with entries lambda_m, a degree-preserving skew operator built
from the linear drift matrix b, and a skew operator built from the
nonlinear drift functions c_i.  Nonlinear drifts are described either by
Hermite coefficient tables over each function's support (assembled with
exact triple-product integrals) or, for non-polynomial test systems with
N <= 3, by Gauss-Hermite Galerkin quadrature.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BasisError, DriftError
from .hermite import (
    HermiteContext,
    gauss_hermite_rule,
    he_table,
    hermite_triple_product,
)
from .multiindex import BasisSet

DIAGONAL = "diagonal"
SKEW = "skew"

ASYMMETRY_TOL = 1e-10  # relative; larger raw asymmetry signals a bad drift spec


@dataclass(frozen=True)
class SystemSpec:
    """Full description of one dissipative system.

    `rates` are the effective per-variable dissipation rates (any viscosity
    scaling already applied), sorted non-decreasing.  `strength` is the
    uniform bound J on ||c(x)|| (may be inf); `linear_strength` bounds
    |b_ij|.  The nonlinear drift object, when present, knows how to
    evaluate itself pointwise and how to assemble its Galerkin matrix.
    """

    name: str
    rates: np.ndarray
    noise: float
    linear: object = None  # sparse matrix b, or None
    nonlinear: object = None  # drift model, or None
    strength: float = 0.0  # J
    linear_strength: float = 0.0  # J1

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if np.any(rates <= 0) or np.any(np.diff(rates) < 0):
            raise BasisError("rates must be positive and sorted non-decreasing")
        if self.noise <= 0:
            raise BasisError("noise rate q must be positive")
        object.__setattr__(self, "rates", rates)
        if self.linear is not None:
            linear = sp.csr_matrix(self.linear)
            if linear.shape != (rates.size, rates.size):
                raise BasisError("linear drift matrix has the wrong shape")
            object.__setattr__(self, "linear", linear)

    @property
    def n_vars(self) -> int:
        return self.rates.size

    @property
    def context(self) -> HermiteContext:
        return HermiteContext(rates=self.rates, noise=self.noise)

    def gamma(self) -> float:
        """Relative-boundedness constant J * sqrt(2/q); inf when J is."""
        if not math.isfinite(self.strength):
            return math.inf
        return self.strength * math.sqrt(2.0 / self.noise)

    def linear_sparsity(self) -> int:
        """Max nonzeros per row/column of b."""
        if self.linear is None:
            return 0
        csc = sp.csc_matrix(self.linear)
        per_col = np.diff(csc.indptr).max(initial=0)
        per_row = np.diff(csc.T.tocsc().indptr).max(initial=0)
        return int(max(per_col, per_row))

    def sparsity(self) -> int:
        """Declared s: max drift-function support size and b row/col count."""
        s = self.linear_sparsity()
        if self.nonlinear is not None:
            s = max(s, self.nonlinear.sparsity)
        return s

    def drift_value(self, x) -> np.ndarray:
        """Total drift b_i(x) = linear + nonlinear part, for the SDE oracle."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        if self.linear is not None:
            flat = x.reshape(-1, x.shape[-1])
            out += (self.linear @ flat.T).T.reshape(x.shape)
        if self.nonlinear is not None:
            out = out + self.nonlinear.value(x)
        return out


@dataclass(frozen=True)
class SparseOperator:
    """A CSR matrix over a BasisSet with a declared symmetry and role."""

    matrix: sp.csr_matrix
    symmetry: str
    role: str  # "dissipation" | "linear" | "nonlinear"
    basis: BasisSet

    @property
    def shape(self):
        return self.matrix.shape

    def matvec(self, v):
        return self.matrix @ v

    def max_column_nonzeros(self) -> int:
        if self.matrix.nnz == 0:
            return 0
        return int(np.diff(self.matrix.tocsc().indptr).max())


class CoefficientTableDrift:
    """Nonlinear drift given by Hermite coefficients of each c_i.

    `supports[i]` lists the variables c_i touches; `terms[i]` holds
    (orders-over-support, coefficient) pairs in the context-normalized
    Hermite basis, so c_i(x) = sum coeff * prod_v He_{p_v}(x_v s_v)/sqrt(p_v!).
    """

    def __init__(self, supports: dict, terms: dict, ctx: HermiteContext,
                 strength: float = math.inf):
        for i, sup in supports.items():
            for orders, _ in terms.get(i, []):
                if len(orders) != len(sup):
                    raise DriftError(
                        f"term of c_{i} has {len(orders)} orders for a "
                        f"support of {len(sup)} variables")
        for i in terms:
            if i not in supports:
                raise DriftError(f"coefficient table references undeclared function c_{i}")
        self.supports = {i: tuple(sup) for i, sup in supports.items()}
        self.terms = {i: [(tuple(p), float(c)) for p, c in tt] for i, tt in terms.items()}
        self.ctx = ctx
        self.strength = float(strength)
        self.sparsity = max((len(s) for s in self.supports.values()), default=0)

    def _factor_values(self, i, x):
        """Per-term values of c_i at points x of shape (..., N)."""
        x = np.asarray(x, dtype=float)
        sup = self.supports[i]
        max_deg = max((max(p) for p, _ in self.terms[i]), default=0)
        tables = {v: he_table(max_deg, x[..., v] * self.ctx.scalings[v]) for v in sup}
        total = np.zeros(x.shape[:-1])
        for p, coeff in self.terms[i]:
            term = np.full(x.shape[:-1], coeff)
            for v, deg in zip(sup, p):
                term = term * tables[v][deg] / math.sqrt(math.factorial(deg))
            total += term
        return total

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for i in self.supports:
            out[..., i] = self._factor_values(i, x)
        return out

    def divergence(self, x):
        """sum_i d c_i / d x_i, exact via the Hermite lowering identity."""
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for i, sup in self.supports.items():
            if i not in sup:
                continue
            pos = sup.index(i)
            lowered = []
            for p, coeff in self.terms[i]:
                if p[pos] == 0:
                    continue
                q = list(p)
                q[pos] -= 1
                scale = math.sqrt(2 * p[pos] * self.ctx.rates[i] / self.ctx.noise)
                lowered.append((tuple(q), coeff * scale))
            if lowered:
                probe = CoefficientTableDrift({i: sup}, {i: lowered}, self.ctx)
                total += probe._factor_values(i, x)
        return total

    def weighted_radial(self, x):
        """sum_i lambda_i x_i c_i(x)."""
        x = np.asarray(x, dtype=float)
        vals = self.value(x)
        return np.einsum("...i,...i->...", x * self.ctx.rates, vals)

    def assemble(self, basis: BasisSet, spec) -> sp.csr_matrix:
        rates, q = spec.rates, spec.noise
        rows, cols, vals = [], [], []
        triple = {}

        def g(a, b, c):
            key = (a, b, c)
            if key not in triple:
                triple[key] = hermite_triple_product(a, b, c)
            return triple[key]

        for col in range(len(basis)):
            m = basis.orders[col]
            for i, sup in self.supports.items():
                if m[i] == 0:
                    continue
                factor0 = math.sqrt(2.0 * m[i] * rates[i] / q)
                base = m.copy()
                base[i] -= 1
                for p, coeff in self.terms[i]:
                    # candidate row indices agree with base outside the
                    # support; inside, parity and triangle rules apply
                    per_var = []
                    for v, deg in zip(sup, p):
                        b_v = int(base[v])
                        cand = [(n_v, g(deg, b_v, n_v))
                                for n_v in range(abs(b_v - deg), b_v + deg + 1, 2)]
                        per_var.append([(n_v, w) for n_v, w in cand if w != 0.0])
                    for combo in itertools.product(*per_var):
                        n = base.copy()
                        val = factor0 * coeff
                        for (v, _), (n_v, w) in zip(zip(sup, p), combo):
                            n[v] = n_v
                            val *= w
                        row = basis.get(n)
                        if row >= 0 and val != 0.0:
                            rows.append(row)
                            cols.append(col)
                            vals.append(val)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(len(basis),) * 2)
        return mat.tocsr()


class QuadratureDrift:
    """Nonlinear drift given by point-evaluable functions (N <= 3 systems).

    Assembly integrates each Galerkin matrix element with a tensor
    Gauss-Hermite rule; `n_nodes` must be generous enough that the raw
    asymmetry stays below the assembly tolerance.
    """

    def __init__(self, funcs: dict, supports: dict, ctx: HermiteContext,
                 strength: float = math.inf, divergence_fn=None,
                 radial_fn=None, n_nodes: int = 200):
        self.funcs = funcs
        self.supports = {i: tuple(s) for i, s in supports.items()}
        self.ctx = ctx
        self.strength = float(strength)
        self.divergence_fn = divergence_fn
        self.radial_fn = radial_fn
        self.n_nodes = n_nodes
        self.sparsity = max((len(s) for s in self.supports.values()), default=0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for i, f in self.funcs.items():
            out[..., i] = f(x)
        return out

    def divergence(self, x, step: float = 1e-5):
        if self.divergence_fn is not None:
            return self.divergence_fn(np.asarray(x, dtype=float))
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for i, f in self.funcs.items():
            ei = np.zeros(x.shape[-1])
            ei[i] = step
            total += (f(x + ei) - f(x - ei)) / (2 * step)
        return total

    def weighted_radial(self, x):
        if self.radial_fn is not None:
            return self.radial_fn(np.asarray(x, dtype=float))
        x = np.asarray(x, dtype=float)
        vals = self.value(x)
        return np.einsum("...i,...i->...", x * self.ctx.rates, vals)

    def assemble(self, basis: BasisSet, spec) -> sp.csr_matrix:
        n_vars = basis.n_vars
        if n_vars > 3:
            raise DriftError("quadrature assembly is limited to N <= 3")
        rates, q = spec.rates, spec.noise
        y, w = gauss_hermite_rule(self.n_nodes)
        axes = [y / s for s in self.ctx.scalings]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
        wts = np.ones(pts.shape[0])
        for g in np.meshgrid(*([w] * n_vars), indexing="ij"):
            wts = wts * g.reshape(-1)

        # evaluation table for every index of degree <= K, zero included
        ext = [np.zeros(n_vars, dtype=np.int32)] + list(basis.orders)
        ext_lookup = {arr.tobytes(): k for k, arr in
                      enumerate(np.asarray(a, dtype=np.int32) for a in ext)}
        max_deg = basis.max_degree
        per_var = [he_table(max_deg, pts[:, v] * self.ctx.scalings[v]) for v in range(n_vars)]
        V = np.empty((pts.shape[0], len(ext)))
        sqw = np.sqrt(wts)
        for k, orders in enumerate(ext):
            col = sqw.copy()
            for v, deg in enumerate(orders):
                if deg:
                    col = col * per_var[v][deg] / math.sqrt(math.factorial(deg))
            V[:, k] = col

        dense = np.zeros((len(basis), len(basis)))
        for i, f in self.funcs.items():
            cvals = np.asarray(f(pts), dtype=float)
            W = V.T @ (cvals[:, None] * V)
            for col in range(len(basis)):
                m = basis.orders[col]
                if m[i] == 0:
                    continue
                factor0 = math.sqrt(2.0 * m[i] * rates[i] / q)
                base = m.copy()
                base[i] -= 1
                k = ext_lookup[np.asarray(base, dtype=np.int32).tobytes()]
                dense[:, col] += factor0 * W[1:, k]
        return sp.csr_matrix(dense)


def assemble_dissipation(basis: BasisSet, spec) -> SparseOperator:
    """Diagonal operator with entries lambda_m in basis order."""
    _check_spec_basis(basis, spec)
    mat = sp.diags(basis.weights, format="csr")
    return SparseOperator(mat, DIAGONAL, "dissipation", basis)


def assemble_linear_drift(basis: BasisSet, spec) -> SparseOperator:
    """Degree-preserving skew operator from the linear drift matrix b.

    Couples m to m - e_i + e_j with matrix element beta_ij sqrt(m_i (m_j+1)),
    beta_ij = b_ij sqrt(lambda_i/lambda_j).  Rejects b violating
    lambda_i b_ij = -lambda_j b_ji.
    """
    _check_spec_basis(basis, spec)
    n = len(basis)
    if spec.linear is None:
        return SparseOperator(sp.csr_matrix((n, n)), SKEW, "linear", basis)
    b = sp.coo_matrix(spec.linear)
    rates = spec.rates
    scale = max(abs(b.data).max(initial=0.0), 1.0)
    lamb = b.multiply(rates[:, None])
    resid = abs(lamb + lamb.T).max() if lamb.nnz else 0.0
    if resid > 1e-12 * scale * rates.max():
        raise DriftError(
            "linear drift violates lambda_i b_ij = -lambda_j b_ji "
            f"(residual {resid:.3e})")
    beta = b.multiply(np.sqrt(rates)[:, None]).multiply(1.0 / np.sqrt(rates)[None, :])
    beta = ((beta - beta.T) * 0.5).tocoo()  # exact skewness of the float data

    entries = list(zip(beta.row, beta.col, beta.data))
    rows, cols, vals = [], [], []
    for col in range(n):
        m = basis.orders[col]
        for i, j, bij in entries:
            if m[i] == 0 or bij == 0.0:
                continue
            target = m.copy()
            target[i] -= 1
            target[j] += 1
            row = basis.get(target)
            if row < 0:
                continue
            rows.append(row)
            cols.append(col)
            # i == j never occurs: beta is exactly skew, so its diagonal is 0
            vals.append(bij * math.sqrt(m[i] * (m[j] + 1)))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return SparseOperator(mat, SKEW, "linear", basis)


def assemble_nonlinear_drift(basis: BasisSet, spec,
                             asym_tol: float = ASYMMETRY_TOL) -> SparseOperator:
    """Skew operator from the nonlinear drift.

    The raw assembly is symmetrized as (M - M^T)/2; a relative raw
    asymmetry above `asym_tol` means the drift spec is not divergence-free
    and is rejected rather than silently repaired.
    """
    _check_spec_basis(basis, spec)
    n = len(basis)
    if spec.nonlinear is None:
        return SparseOperator(sp.csr_matrix((n, n)), SKEW, "nonlinear", basis)
    raw = spec.nonlinear.assemble(basis, spec).tocsr()
    scale = abs(raw.data).max(initial=0.0)
    if scale > 0.0:
        asym = abs((raw + raw.T).data).max(initial=0.0) / scale
        if asym > asym_tol:
            raise DriftError(
                f"raw drift matrix asymmetry {asym:.3e} exceeds {asym_tol:.1e}; "
                "the drift spec violates the divergence-free conditions")
    mat = ((raw - raw.T) * 0.5).tocsr()
    mat.eliminate_zeros()
    return SparseOperator(mat, SKEW, "nonlinear", basis)


def _check_spec_basis(basis: BasisSet, spec):
    if basis.n_vars != spec.n_vars:
        raise BasisError("basis and system have different variable counts")
    if not np.array_equal(basis.rates, spec.rates):
        raise BasisError("basis was enumerated with different rates than the system")


def save_drift_tables(drift: CoefficientTableDrift, path):
    """Write a coefficient table file.

    One record per line: `<function> <support vars> <orders> <coefficient>`,
    with 1-based variable labels and comma-separated lists, e.g.
    `1 1,2 2,1 0.25` says c_1 carries 0.25 * H_(2,1) over variables (1,2).
    """
    with open(path, "w") as fh:
        fh.write("# drift coefficient table: function support orders coefficient\n")
        for i in sorted(drift.supports):
            sup = ",".join(str(v + 1) for v in drift.supports[i])
            for p, coeff in drift.terms.get(i, []):
                orders = ",".join(str(d) for d in p)
                fh.write(f"{i + 1} {sup} {orders} {coeff!r}\n")


def load_drift_tables(path, ctx: HermiteContext,
                      strength: float = math.inf) -> CoefficientTableDrift:
    """Parse a coefficient table file (see save_drift_tables for the format)."""
    supports, terms = {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DriftError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            i = int(parts[0]) - 1
            sup = tuple(int(v) - 1 for v in parts[1].split(","))
            orders = tuple(int(v) for v in parts[2].split(","))
            coeff = float(parts[3])
            if any(v < 0 or v >= ctx.n_vars for v in sup) or i < 0 or i >= ctx.n_vars:
                raise DriftError(f"{path}:{lineno}: variable label out of range")
            if i in supports and supports[i] != sup:
                raise DriftError(f"{path}:{lineno}: inconsistent support for c_{i + 1}")
            supports[i] = sup
            terms.setdefault(i, []).append((orders, coeff))
    return CoefficientTableDrift(supports, terms, ctx, strength=strength)


@dataclass
class DivergenceReport:
    """Pointwise residuals of the divergence-free conditions."""

    divergence_residual: float
    radial_residual: float
    linear_residual: float
    n_points: int
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return max(self.divergence_residual, self.radial_residual,
                   self.linear_residual) < self.tolerance


def verify_divergence_free(spec, n_points: int = 100, seed: int = 0) -> DivergenceReport:
    """Sample the three divergence-free conditions; report max residuals."""
    rng = np.random.default_rng(seed)
    std = np.sqrt(spec.noise / (2.0 * spec.rates))
    pts = rng.normal(size=(n_points, spec.n_vars)) * (3.0 * std)

    if spec.nonlinear is None:
        div_res = 0.0
        rad_res = 0.0
    else:
        div_res = float(np.abs(spec.nonlinear.divergence(pts)).max())
        rad_res = float(np.abs(spec.nonlinear.weighted_radial(pts)).max())

    if spec.linear is None:
        lin_res = 0.0
    else:
        lamb = sp.coo_matrix(spec.linear).multiply(spec.rates[:, None])
        lin_res = float(abs(lamb + lamb.T).max()) if lamb.nnz else 0.0
    return DivergenceReport(div_res, rad_res, lin_res, n_points)


def operator_norm_estimate(matrix, n_iter: int = 200, tol: float = 1e-6,
                           seed: int = 0) -> float:
    """Spectral norm by power iteration on M^T M."""
    n = matrix.shape[1]
    if n == 0 or (sp.issparse(matrix) and matrix.nnz == 0):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    mt = matrix.T
    sigma = 0.0
    for _ in range(n_iter):
        w = mt @ (matrix @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_sigma = math.sqrt(norm)
        v = w / norm
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return new_sigma
        sigma = new_sigma
    return sigma


@dataclass
class SparsityAudit:
    """Column-sparsity and norm checks for one assembled operator."""

    role: str
    max_col_nonzeros: int
    nonzero_bound: float
    norm_estimate: float
    norm_bound: float  # inf means "no applicable bound"
    notes: str = ""

    @property
    def passed(self) -> bool:
        ok = self.max_col_nonzeros <= self.nonzero_bound
        if math.isfinite(self.norm_bound):
            # power iteration underestimates; 1e-6 covers its tolerance
            ok = ok and self.norm_estimate <= self.norm_bound * (1 + 1e-6)
        return ok


def sparsity_audit(op: SparseOperator, basis: BasisSet, spec) -> SparsityAudit:
    """Audit an assembled operator against its declared sparsity/norm bounds."""
    K = basis.max_degree
    nnz = op.max_column_nonzeros()
    if op.role == "dissipation":
        norm = float(basis.weights.max())
        return SparsityAudit("dissipation", nnz, 1, norm, basis.scheme.R)
    norm = operator_norm_estimate(op.matrix)
    if op.role == "linear":
        s = spec.linear_sparsity()
        kappa = float(spec.rates[-1] / spec.rates[0])
        bound = s * spec.linear_strength * K * math.sqrt(kappa)
        return SparsityAudit("linear", nnz, s * K * (K + 1), norm, bound)
    if op.role == "nonlinear":
        s = spec.nonlinear.sparsity if spec.nonlinear is not None else 0
        gamma = spec.gamma()
        if math.isfinite(gamma):
            bound = gamma * math.sqrt(basis.scheme.R)
            notes = ""
        else:
            bound = math.inf
            notes = "norm bound not applicable (J = inf)"
        return SparsityAudit("nonlinear", nnz, K * (K + 1) ** s, norm, bound, notes)
    raise ValueError(f"unknown operator role {op.role!r}")
