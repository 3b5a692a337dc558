"""Built-in system constructors.

Four families: the planar nonlinear oscillator (cubic and bounded
frequency profiles), the spectral Galerkin discretization of the 2D
incompressible Navier-Stokes equations on the torus, the Taylor-Green
analytic reference flow, and the clock-register encoding that maps a real
quantum circuit to a sparse skew linear drift.
"""

from __future__ import annotations

import json
import math

import numpy as np
import scipy.sparse as sp

from .errors import BasisError, DriftError
from .hermite import HermiteContext
from .multiindex import BasisSet
from .operators import (
    CoefficientTableDrift,
    QuadratureDrift,
    SparseOperator,
    SystemSpec,
    assemble_nonlinear_drift,
)

# ---------------------------------------------------------------------------
# nonlinear oscillator
# ---------------------------------------------------------------------------


class OscillatorLadderDrift:
    """Closed-form drift of the planar oscillator with omega(r) = 1 + r^2.

    The Galerkin matrix is the ladder composition
    (I + eta (a1+a1')^2 + eta (a2+a2')^2)(a2' a1 - a1' a2), eta = q/(2 lambda),
    evaluated on a working basis extended two degrees above the target so
    the truncated product equals the exact projection.
    """

    def __init__(self, lam: float, q: float):
        self.lam = float(lam)
        self.q = float(q)
        self.eta = q / (2.0 * lam)
        self.strength = math.inf  # sup r*(1+r^2) diverges
        self.sparsity = 2

    def _omega(self, x):
        return 1.0 + x[..., 0] ** 2 + x[..., 1] ** 2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        w = self._omega(x)
        return np.stack([x[..., 1] * w, -x[..., 0] * w], axis=-1)

    def divergence(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def weighted_radial(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def assemble(self, basis: BasisSet, spec) -> sp.csr_matrix:
        k_ext = basis.max_degree + 2
        ext = [(0, 0)]
        for deg in range(1, k_ext + 1):
            ext.extend((deg - i, i) for i in range(deg + 1))
        lookup = {m: idx for idx, m in enumerate(ext)}
        dim = len(ext)

        def lowering(var):
            rows, cols, vals = [], [], []
            for idx, m in enumerate(ext):
                if m[var] > 0:
                    target = (m[0] - 1, m[1]) if var == 0 else (m[0], m[1] - 1)
                    rows.append(lookup[target])
                    cols.append(idx)
                    vals.append(math.sqrt(m[var]))
            return sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()

        a1, a2 = lowering(0), lowering(1)
        x1 = a1 + a1.T
        x2 = a2 + a2.T
        rotation = a2.T @ a1 - a1.T @ a2
        scaling = sp.identity(dim, format="csr") + self.eta * (x1 @ x1) + self.eta * (x2 @ x2)
        full = (scaling @ rotation).tocsr()

        idx = np.array([lookup[tuple(int(v) for v in row)] for row in basis.orders])
        return full[np.ix_(idx, idx)].tocsr()


def oscillator_system(lam: float = 0.1, q: float = 0.02,
                      profile: str = "cubic", n_nodes: int = 200) -> SystemSpec:
    """Planar oscillator dX1 = -lam X1 + omega(|X|) X2, dX2 = -lam X2 - omega X1.

    profile "cubic" uses omega(r) = 1 + r^2 (unbounded drift, J = inf) and a
    ladder-algebra closed form; profile "bounded" uses omega(r) = 1/(1+r^2)
    (J = 1/2) and is routed to quadrature assembly.
    """
    rates = np.array([lam, lam], dtype=float)
    ctx = HermiteContext(rates=rates, noise=q)
    if profile == "cubic":
        drift = OscillatorLadderDrift(lam, q)
        strength = math.inf
    elif profile == "bounded":
        def omega(x):
            return 1.0 / (1.0 + x[..., 0] ** 2 + x[..., 1] ** 2)

        funcs = {0: lambda x: x[..., 1] * omega(x),
                 1: lambda x: -x[..., 0] * omega(x)}
        zero = lambda x: np.zeros(np.asarray(x).shape[:-1])
        drift = QuadratureDrift(funcs, {0: (0, 1), 1: (0, 1)}, ctx,
                                strength=0.5, divergence_fn=zero,
                                radial_fn=zero, n_nodes=n_nodes)
        strength = 0.5
    else:
        raise DriftError(f"unknown oscillator profile {profile!r}")
    return SystemSpec(name=f"oscillator[{profile}]", rates=rates, noise=q,
                      nonlinear=drift, strength=strength)


def oscillator_coefficient_tables(lam: float, q: float) -> CoefficientTableDrift:
    """Hermite coefficient tables of the cubic-profile oscillator drift.

    c1 = x2 (1 + x1^2 + x2^2) expands over the normalized basis as
    sqrt(eta) [(1+4 eta) H_(0,1) + eta sqrt(2) H_(2,1) + eta sqrt(6) H_(0,3)]
    and c2 is the sign-flipped mirror image.  Used to cross-check the
    ladder closed form through an independent assembly route.
    """
    rates = np.array([lam, lam], dtype=float)
    ctx = HermiteContext(rates=rates, noise=q)
    eta = q / (2.0 * lam)
    root = math.sqrt(eta)
    terms1 = [((0, 1), root * (1 + 4 * eta)),
              ((2, 1), root * eta * math.sqrt(2)),
              ((0, 3), root * eta * math.sqrt(6))]
    terms2 = [((1, 0), -root * (1 + 4 * eta)),
              ((3, 0), -root * eta * math.sqrt(6)),
              ((1, 2), -root * eta * math.sqrt(2))]
    return CoefficientTableDrift({0: (0, 1), 1: (0, 1)},
                                 {0: terms1, 1: terms2}, ctx)


def oscillator_closed_form(basis: BasisSet, spec: SystemSpec) -> SparseOperator:
    """Ladder-algebra nonlinear operator for the cubic-profile oscillator."""
    if not isinstance(spec.nonlinear, OscillatorLadderDrift):
        raise DriftError("closed form only applies to the cubic profile; "
                         "bounded profiles assemble by quadrature")
    return assemble_nonlinear_drift(basis, spec)


# ---------------------------------------------------------------------------
# spectral 2D Navier-Stokes
# ---------------------------------------------------------------------------


def wavenumber_table(n_modes: int) -> np.ndarray:
    """First n_modes wavevectors k = (k1, k2), k1 >= 0, k1 = 0 => k2 > 0.

    Ordered by |k|^2 ascending with ties broken by (k1, k2) lex, so the
    Stokes eigenvalues 4 pi^2 |k|^2 come out non-decreasing.
    """
    bound = 2
    while True:
        cands = [(k1, k2) for k1 in range(bound + 1)
                 for k2 in range(-bound, bound + 1)
                 if (k1 > 0) or (k1 == 0 and k2 > 0)]
        cands.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
        # only keep modes whose square norm is certainly complete at this bound
        complete = [k for k in cands if k[0] ** 2 + k[1] ** 2 <= bound ** 2]
        if len(complete) >= n_modes:
            return np.array(complete[:n_modes], dtype=int)
        bound *= 2


def _perp(v):
    return np.array([v[1], -v[0]])


class SpectralAdvectionDrift:
    """Quadratic advection drift of the Galerkin-projected 2D NSE.

    Matrix elements follow the closed Kronecker-delta representation: each
    interacting triple of modes (k, i, j) with k in {i+j, i-j, j-i}
    contributes a geometric factor (i_perp . j)(j . k)/(|i||k||j|^2) and a
    one-up/two-down ladder move, so the operator couples total degrees
    differing by exactly one.
    """

    def __init__(self, table: np.ndarray, nu: float, q: float):
        self.table = np.asarray(table, dtype=int)
        if np.any((self.table[:, 0] < 0) |
                  ((self.table[:, 0] == 0) & (self.table[:, 1] <= 0))):
            raise DriftError("wavenumber table violates the sign convention "
                             "(k1 > 0, or k1 = 0 and k2 > 0)")
        self.nu = float(nu)
        self.q = float(q)
        self.lam_raw = 4.0 * math.pi ** 2 * (self.table ** 2).sum(axis=1).astype(float)
        self.rates = self.nu * self.lam_raw
        self.strength = math.inf
        self._build_triples()
        self.sparsity = self._support_sparsity()

    def _build_triples(self):
        lookup = {tuple(k): idx for idx, k in enumerate(self.table)}
        triples = []
        n = len(self.table)
        for i_idx in range(n):
            ivec = self.table[i_idx]
            for j_idx in range(n):
                if j_idx == i_idx:
                    continue
                jvec = self.table[j_idx]
                for target, sign in ((ivec + jvec, 1.0), (ivec - jvec, 1.0),
                                     (jvec - ivec, -1.0)):
                    k_idx = lookup.get(tuple(target), -1)
                    if k_idx < 0 or k_idx in (i_idx, j_idx):
                        continue
                    kvec = self.table[k_idx]
                    geom = float(_perp(ivec) @ jvec) * float(jvec @ kvec)
                    if geom == 0.0:
                        continue
                    geom /= (math.sqrt(float(ivec @ ivec))
                             * math.sqrt(float(kvec @ kvec))
                             * float(jvec @ jvec))
                    triples.append((k_idx, i_idx, j_idx, sign * geom))
        self.triples = triples
        self._by_k = {}
        for k_idx, i_idx, j_idx, geo in triples:
            self._by_k.setdefault(k_idx, []).append((i_idx, j_idx, geo))

    def _support_sparsity(self) -> int:
        best = 0
        for k_idx, items in self._by_k.items():
            touched = set()
            for i_idx, j_idx, _ in items:
                touched.update((i_idx, j_idx))
            best = max(best, len(touched))
        return best

    def value(self, x):
        """c_k(x) = -sum b(e_i, e_j, e_k) x_i x_j over the interacting triples."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k_idx, i_idx, j_idx, geo in self.triples:
            coeff = -0.5 * math.sqrt(2.0 * self.lam_raw[j_idx]) * geo
            out[..., k_idx] += coeff * x[..., i_idx] * x[..., j_idx]
        return out

    def divergence(self, x):
        # c_k never touches x_k (triples exclude i = k and j = k)
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def weighted_radial(self, x):
        x = np.asarray(x, dtype=float)
        vals = self.value(x)
        return np.einsum("...i,...i->...", x * self.rates, vals)

    def assemble(self, basis: BasisSet, spec) -> sp.csr_matrix:
        q_eff = self.q / self.nu
        lam = self.lam_raw
        rows, cols, vals = [], [], []
        n_modes = len(self.table)
        for col in range(len(basis)):
            nvec = basis.orders[col]
            for k_idx in np.nonzero(nvec)[0]:
                items = self._by_k.get(int(k_idx))
                if not items:
                    continue
                n_k = int(nvec[k_idx])
                for i_idx, j_idx, geo in items:
                    base = -0.5 * math.sqrt(n_k * q_eff * lam[k_idx] / lam[i_idx]) * geo
                    n_i, n_j = int(nvec[i_idx]), int(nvec[j_idx])
                    moves = [((1, 1), math.sqrt((1 + n_i) * (1 + n_j)))]
                    if n_j >= 1:
                        moves.append(((1, -1), math.sqrt((1 + n_i) * n_j)))
                    if n_i >= 1:
                        moves.append(((-1, 1), math.sqrt(n_i * (1 + n_j))))
                    for (di, dj), ladder in moves:
                        target = nvec.copy()
                        target[k_idx] -= 1
                        target[i_idx] += di
                        target[j_idx] += dj
                        row = basis.get(target)
                        if row >= 0:
                            rows.append(row)
                            cols.append(col)
                            vals.append(base * ladder)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(len(basis),) * 2)
        return mat.tocsr()


def nse_system(n_modes: int = 40, nu: float = 0.1, q: float = 1e-5) -> SystemSpec:
    """Galerkin 2D NSE in the Stokes eigenbasis with additive noise."""
    table = wavenumber_table(n_modes)
    drift = SpectralAdvectionDrift(table, nu, q)
    spec = SystemSpec(name=f"nse[N={n_modes},nu={nu}]", rates=drift.rates,
                      noise=q, nonlinear=drift, strength=math.inf)
    return spec


def nse_entry_oracle(drift: SpectralAdvectionDrift, m, n, q: float) -> float:
    """Independent re-implementation of one advection matrix element.

    Brute-force loops over all (k, i, j) with the delta conditions checked
    directly on wavevectors; used only as a test oracle against the
    grouped assembly.
    """
    table = drift.table
    lam = drift.lam_raw
    q_eff = q / drift.nu
    m = np.asarray(m, dtype=int)
    n = np.asarray(n, dtype=int)
    total = 0.0
    n_modes = len(table)
    for k_idx in range(n_modes):
        if n[k_idx] == 0:
            continue
        for i_idx in range(n_modes):
            if i_idx == k_idx:
                continue
            for j_idx in range(n_modes):
                if j_idx in (k_idx, i_idx):
                    continue
                kvec, ivec, jvec = table[k_idx], table[i_idx], table[j_idx]
                delta = 0.0
                if np.array_equal(kvec, ivec + jvec):
                    delta += 1.0
                if np.array_equal(kvec, ivec - jvec):
                    delta += 1.0
                if np.array_equal(kvec, jvec - ivec):
                    delta -= 1.0
                if delta == 0.0:
                    continue
                geom = float(_perp(ivec) @ jvec) * float(jvec @ kvec)
                geom /= (math.sqrt(float(ivec @ ivec)) * math.sqrt(float(kvec @ kvec))
                         * float(jvec @ jvec))
                base = -0.5 * math.sqrt(n[k_idx] * q_eff * lam[k_idx] / lam[i_idx]) \
                    * geom * delta
                for (di, dj), ladder in (
                        ((1, 1), math.sqrt((1 + n[i_idx]) * (1 + n[j_idx]))),
                        ((1, -1), math.sqrt((1 + n[i_idx]) * n[j_idx])),
                        ((-1, 1), math.sqrt(n[i_idx] * (1 + n[j_idx])))):
                    target = n.copy()
                    target[k_idx] -= 1
                    target[i_idx] += di
                    target[j_idx] += dj
                    if np.all(target >= 0) and np.array_equal(target, m):
                        total += base * ladder
    return total


def taylor_green(t, x, y, nu: float):
    """Decaying Taylor-Green vortex velocity (u1, u2) on the unit torus."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    decay = np.exp(-8.0 * math.pi ** 2 * nu * np.asarray(t, dtype=float))
    u1 = math.sqrt(2) * np.sin(2 * math.pi * np.asarray(x)) \
        * np.cos(2 * math.pi * np.asarray(y)) * decay
    u2 = -math.sqrt(2) * np.cos(2 * math.pi * np.asarray(x)) \
        * np.sin(2 * math.pi * np.asarray(y)) * decay
    return u1, u2


def taylor_green_mode_coefficients(table: np.ndarray, t: float, nu: float) -> np.ndarray:
    """Projection of the Taylor-Green flow onto the sine eigenbasis.

    Only modes (1, 1) and (1, -1) carry weight: +g(t)/sqrt(2) and
    -g(t)/sqrt(2) with g(t) = exp(-8 pi^2 nu t).
    """
    lookup = {tuple(k): idx for idx, k in enumerate(np.asarray(table))}
    if (1, 1) not in lookup or (1, -1) not in lookup:
        raise BasisError("wavenumber table too small for the Taylor-Green modes")
    coeffs = np.zeros(len(table))
    g = math.exp(-8.0 * math.pi ** 2 * nu * t)
    coeffs[lookup[(1, 1)]] = g / math.sqrt(2)
    coeffs[lookup[(1, -1)]] = -g / math.sqrt(2)
    return coeffs


def velocity_mode(table: np.ndarray, idx: int, xi) -> np.ndarray:
    """Eigenfunction e_k at a point: sqrt(2) (k_perp/|k|) sin(2 pi k . xi)."""
    k = np.asarray(table)[idx]
    xi = np.asarray(xi, dtype=float)
    phase = math.sqrt(2) * np.sin(2 * math.pi * float(k @ xi))
    return _perp(k) / math.sqrt(float(k @ k)) * phase


def probe_functional_coefficients(table: np.ndarray, xi) -> np.ndarray:
    """Coefficients of u0(x) = sum_k x_k (E1 . e_k(xi)) for a spatial probe."""
    return np.array([velocity_mode(table, idx, xi)[0] for idx in range(len(table))])


# ---------------------------------------------------------------------------
# circuit-to-drift clock construction
# ---------------------------------------------------------------------------

_INV_SQRT2 = 1.0 / math.sqrt(2)

GATE_MATRICES = {
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "H": np.array([[_INV_SQRT2, _INV_SQRT2], [_INV_SQRT2, -_INV_SQRT2]]),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
                     dtype=float),
    "CZ": np.diag([1.0, 1.0, 1.0, -1.0]),
}


def rotation_gate(theta: float) -> np.ndarray:
    """Real single-qubit rotation R_y(theta)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def _check_gate(u: np.ndarray):
    u = np.asarray(u)
    if np.iscomplexobj(u):
        if np.abs(u.imag).max() > 0:
            raise DriftError("gates must have real matrix elements")
        u = u.real
    u = u.astype(float)
    dim = u.shape[0]
    if u.shape != (dim, dim) or dim & (dim - 1) or dim < 2:
        raise DriftError("gate matrix must be square with power-of-two size")
    if np.abs(u @ u.T - np.eye(dim)).max() > 1e-12:
        raise DriftError("gate matrix is not orthogonal")
    return u


def embed_gate(u: np.ndarray, targets, n_qubits: int) -> np.ndarray:
    """Expand a k-qubit gate to the full register (qubit 0 = leftmost bit)."""
    u = np.asarray(u, dtype=float)
    k = len(targets)
    if u.shape != (2 ** k, 2 ** k):
        raise DriftError("gate size does not match its target count")
    if len(set(targets)) != k or any(t < 0 or t >= n_qubits for t in targets):
        raise DriftError("bad target qubit list")
    dim = 2 ** n_qubits
    full = np.zeros((dim, dim))
    shifts = [n_qubits - 1 - t for t in targets]
    for col in range(dim):
        tin = 0
        for pos, sh in enumerate(shifts):
            tin |= ((col >> sh) & 1) << (k - 1 - pos)
        for tout in range(2 ** k):
            amp = u[tout, tin]
            if amp == 0.0:
                continue
            row = col
            for pos, sh in enumerate(shifts):
                bit = (tout >> (k - 1 - pos)) & 1
                row = (row & ~(1 << sh)) | (bit << sh)
            full[row, col] += amp
    return full


def chain_walk_weights(n_gates: int) -> np.ndarray:
    """Weights that turn the clock walk into a half-turn: w_j = (pi/2) sqrt((m-j)(j+1)).

    With the skew generator sum_j w_j (|j><j+1| - |j+1><j|), the matrix
    exponential exp(-walk) maps |0> exactly to |m> for every chain length.
    """
    j = np.arange(n_gates)
    return 0.5 * math.pi * np.sqrt((n_gates - j) * (j + 1.0))


def chain_walk_matrix(n_gates: int) -> np.ndarray:
    w = chain_walk_weights(n_gates)
    mat = np.zeros((n_gates + 1, n_gates + 1))
    for j in range(n_gates):
        mat[j, j + 1] += w[j]
        mat[j + 1, j] -= w[j]
    return mat


def clock_drift(circuit, n_qubits: int) -> sp.csr_matrix:
    """Skew drift matrix encoding a circuit on the clock x register space.

    b = sum_j w_{j-1} (|j-1><j| (x) U_j^T  -  |j><j-1| (x) U_j) over the
    (m+1) 2^n dimensional space; exp(-b)|0, 0^n> = |m> (x) U|0^n>.
    """
    gates = [( _check_gate(u), tuple(targets)) for u, targets in circuit]
    m = len(gates)
    if m < 1:
        raise DriftError("circuit must contain at least one gate")
    dim_q = 2 ** n_qubits
    w = chain_walk_weights(m)
    blocks = sp.lil_matrix(((m + 1) * dim_q, (m + 1) * dim_q))
    for j, (u, targets) in enumerate(gates, start=1):
        full = embed_gate(u, targets, n_qubits) if n_qubits else np.array([[1.0]])
        r0, c0 = (j - 1) * dim_q, j * dim_q
        blocks[r0:r0 + dim_q, c0:c0 + dim_q] = w[j - 1] * full.T
        blocks[c0:c0 + dim_q, r0:r0 + dim_q] = -w[j - 1] * full
    return blocks.tocsr()


def clock_system(circuit, n_qubits: int, lam: float = 0.1,
                 q: float = 0.1) -> SystemSpec:
    """Linear divergence-free system whose noiseless flow runs the circuit."""
    b = clock_drift(circuit, n_qubits)
    n_vars = b.shape[0]
    j1 = float(np.abs(b.data).max()) if b.nnz else 0.0
    return SystemSpec(name=f"clock[m={len(circuit)},n={n_qubits}]",
                      rates=np.full(n_vars, float(lam)), noise=q,
                      linear=b, strength=0.0, linear_strength=j1)


def circuit_amplitude(circuit, n_qubits: int) -> float:
    """<0^n| U_m ... U_1 |0^n> by dense multiplication."""
    dim = 2 ** n_qubits
    state = np.zeros(dim)
    state[0] = 1.0
    for u, targets in circuit:
        full = embed_gate(_check_gate(u), targets, n_qubits) if n_qubits \
            else np.array([[1.0]])
        state = full @ state
    return float(state[0])


def random_real_circuit(rng, n_qubits: int, n_gates: int, max_arity: int = 2):
    """Random circuit over {X, Z, H, Ry(theta), CNOT, CZ}."""
    circuit = []
    two_qubit = ["CNOT", "CZ"]
    single = ["X", "Z", "H", "RY"]
    for _ in range(n_gates):
        use_two = (n_qubits >= 2 and max_arity >= 2 and rng.random() < 0.5)
        if use_two:
            name = two_qubit[rng.integers(len(two_qubit))]
            targets = tuple(rng.choice(n_qubits, size=2, replace=False))
            circuit.append((GATE_MATRICES[name], targets))
        else:
            name = single[rng.integers(len(single))]
            u = rotation_gate(rng.uniform(0, 2 * math.pi)) if name == "RY" \
                else GATE_MATRICES[name]
            circuit.append((u, (int(rng.integers(n_qubits)),)))
    return circuit


def parse_circuit(lines):
    """Parse the one-gate-per-line circuit format.

    `H 0`, `CNOT 0 1`, `RY(0.42) 1`, or `MATRIX [[0,1],[1,0]] 0`; `#`
    starts a comment.
    """
    circuit = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        name = head.upper()
        if name.startswith("RY(") and name.endswith(")"):
            u = rotation_gate(float(head[3:-1]))
        elif name == "MATRIX":
            u = np.array(json.loads(rest[0]), dtype=float)
            rest = rest[1:]
        elif name in GATE_MATRICES:
            u = GATE_MATRICES[name]
        else:
            raise DriftError(f"line {lineno}: unknown gate {head!r}")
        targets = tuple(int(t) for t in rest)
        needed = int(math.log2(u.shape[0]))
        if len(targets) != needed:
            raise DriftError(f"line {lineno}: gate needs {needed} targets")
        circuit.append((u, targets))
    return circuit
