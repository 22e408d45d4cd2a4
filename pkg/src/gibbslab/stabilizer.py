"""Exact combinatorics for commuting Pauli thermal states.

Pauli words are GF(2) symplectic pairs with an i^k phase; expectations in a
product-form thermal state of independent commuting generators reduce to
products of tanh weights over a GF(2) solve. Includes the plaquette/vertex
code builders (2d torus, open 2d patch, 4d torus) and the boundary-algebra
equality check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Lattice, Region, coordinate_lattice
from .qcore import (
    DenseState,
    PAULI,
    ResourceLimitError,
    embed_operator,
    partial_trace,
    trace_norm,
)

__all__ = [
    "PauliWord",
    "StabilizerModel",
    "StabExpectation",
    "gf2_rref",
    "gf2_rank",
    "gf2_solve",
    "gf2_nullspace",
    "stab_expectation",
    "toric2d_model",
    "toric2d_full_rows",
    "planar2d_model",
    "toric4d_generators",
    "toric4d_ball",
    "toric2d_loop_correlators",
    "LoopCorrelatorReport",
    "boundary_algebra_equality",
    "AlgebraEqualityReport",
    "ising_disorder_parameter",
    "symmetric_depolarizer_gap",
]


# ----------------------------------------------------------------------------
# GF(2) linear algebra (uint8 matrices)
# ----------------------------------------------------------------------------

def _gf2(m) -> np.ndarray:
    return (np.asarray(m, dtype=np.uint8) & 1).astype(np.uint8)


def gf2_rref(m):
    """Row-reduced echelon form; returns (rref, pivot columns)."""
    a = _gf2(m).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hot = np.nonzero(a[r:, c])[0]
        if len(hot) == 0:
            continue
        pr = r + hot[0]
        if pr != r:
            a[[r, pr]] = a[[pr, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def gf2_rank(m) -> int:
    return len(gf2_rref(m)[1])


def gf2_solve(a, b):
    """One solution x of a x = b over GF(2), or None."""
    a = _gf2(a)
    b = _gf2(b).ravel()
    rows, cols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    r, pivots = gf2_rref(aug)
    if cols in pivots:
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for i, c in enumerate(pivots):
        x[c] = r[i, -1]
    return x


def gf2_nullspace(a):
    """Basis (rows) of the right null space of a over GF(2)."""
    a = _gf2(a)
    rows, cols = a.shape
    r, pivots = gf2_rref(a)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.uint8)
        v[f] = 1
        for i, c in enumerate(pivots):
            v[c] = r[i, f]
        basis.append(v)
    return np.array(basis, dtype=np.uint8) if basis else \
        np.zeros((0, cols), dtype=np.uint8)


def _row_reduce_against(basis_rref, pivots, v):
    """Reduce v against an rref basis; zero result means membership."""
    v = v.copy()
    for i, c in enumerate(pivots):
        if v[c]:
            v ^= basis_rref[i]
    return v


# ----------------------------------------------------------------------------
# Pauli words
# ----------------------------------------------------------------------------

_XZ = np.array([[0, -1], [1, 0]], dtype=complex)  # X @ Z


@dataclass(frozen=True)
class PauliWord:
    """i^phase_power * prod_j X_j^{x_j} Z_j^{z_j}."""

    n: int
    x: np.ndarray
    z: np.ndarray
    phase_power: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x", _gf2(self.x).ravel())
        object.__setattr__(self, "z", _gf2(self.z).ravel())
        object.__setattr__(self, "phase_power", int(self.phase_power) % 4)
        if len(self.x) != self.n or len(self.z) != self.n:
            raise ValueError("bit vectors must have length n")

    @staticmethod
    def from_string(s: str, name: str = "") -> "PauliWord":
        n = len(s)
        x = np.zeros(n, dtype=np.uint8)
        z = np.zeros(n, dtype=np.uint8)
        phase = 0
        for i, ch in enumerate(s.upper()):
            if ch == "X":
                x[i] = 1
            elif ch == "Z":
                z[i] = 1
            elif ch == "Y":
                x[i] = z[i] = 1
                phase += 1  # Y = i XZ
            elif ch != "I":
                raise ValueError(f"bad Pauli letter {ch!r}")
        return PauliWord(n, x, z, phase, name)

    @property
    def phase(self) -> complex:
        return 1j ** self.phase_power

    def support(self) -> tuple:
        return tuple(int(i) for i in np.nonzero(self.x | self.z)[0])

    @property
    def weight(self) -> int:
        return int((self.x | self.z).sum())

    def mul(self, other: "PauliWord") -> "PauliWord":
        if self.n != other.n:
            raise ValueError("length mismatch")
        extra = 2 * int((self.z & other.x).sum())
        return PauliWord(self.n, self.x ^ other.x, self.z ^ other.z,
                         self.phase_power + other.phase_power + extra)

    def commutes_with(self, other: "PauliWord") -> bool:
        return int((self.x & other.z).sum() + (self.z & other.x).sum()) % 2 == 0

    def symplectic_row(self) -> np.ndarray:
        return np.concatenate([self.x, self.z])

    def dense(self, sites=None) -> np.ndarray:
        """Dense matrix on the given site list (default: its support)."""
        sites = tuple(sites) if sites is not None else self.support()
        mats = []
        for s in sites:
            xb, zb = int(self.x[s]), int(self.z[s])
            if xb and zb:
                mats.append(_XZ)
            elif xb:
                mats.append(PAULI["X"])
            elif zb:
                mats.append(PAULI["Z"])
            else:
                mats.append(PAULI["I"])
        out = np.array([[1.0 + 0j]])
        for m in mats:
            out = np.kron(out, m)
        return self.phase * out


@dataclass
class StabilizerModel:
    """Independent commuting Pauli generators with per-generator weights.

    The thermal state is proportional to exp(sum_i beta_i g_i), so a single
    generator has expectation tanh(beta_i).
    """

    n: int
    generators: tuple
    betas: np.ndarray
    lattice: Lattice | None = None
    # full redundant term list (dependents included) for support checks
    full_rows: np.ndarray | None = None

    def __post_init__(self):
        self.generators = tuple(self.generators)
        self.betas = np.asarray(self.betas, dtype=float)
        if self.betas.shape != (len(self.generators),):
            raise ValueError("one weight per generator required")
        for a, b in itertools.combinations(self.generators, 2):
            if not a.commutes_with(b):
                raise ValueError(f"generators {a.name} and {b.name} anticommute")
        m = self.symplectic_matrix()
        if gf2_rank(m) != len(self.generators):
            raise ValueError("generators are GF(2)-dependent")

    def symplectic_matrix(self) -> np.ndarray:
        return np.array([g.symplectic_row() for g in self.generators],
                        dtype=np.uint8)

    def with_betas(self, betas) -> "StabilizerModel":
        return StabilizerModel(self.n, self.generators,
                               np.asarray(betas, dtype=float), self.lattice)

    def hamiltonian_dense(self, cap: int = 2 ** 13) -> np.ndarray:
        d = 2 ** self.n
        if d > cap:
            raise ResourceLimitError(f"dense dimension {d} exceeds cap")
        sites = tuple(range(self.n))
        h = np.zeros((d, d), dtype=complex)
        for g, b in zip(self.generators, self.betas):
            h -= b * embed_operator(g.dense(g.support()), g.support(), sites)
        return h

    def gibbs_dense(self, cap: int = 2 ** 13) -> DenseState:
        h = self.hamiltonian_dense(cap)
        ev, u = np.linalg.eigh(0.5 * (h + h.conj().T))
        w = np.exp(-(ev - ev.min()))
        w /= w.sum()
        return DenseState((u * w) @ u.conj().T, tuple(range(self.n)))

    def ground_projector_dense(self, cap: int = 2 ** 13):
        sites = tuple(range(self.n))
        d = 2 ** self.n
        if d > cap:
            raise ResourceLimitError(f"dense dimension {d} exceeds cap")
        pi = np.eye(d, dtype=complex)
        for g in self.generators:
            gd = embed_operator(g.dense(g.support()), g.support(), sites)
            pi = pi @ (np.eye(d) + gd) / 2.0
        return pi


@dataclass
class StabExpectation:
    value: complex
    in_group: bool
    subset: tuple = ()
    phase_flag: bool = False

    @property
    def real(self) -> float:
        return float(np.real(self.value))


def stab_expectation(model: StabilizerModel, pauli: PauliWord) -> StabExpectation:
    """Exact expectation of a Pauli word in the model's thermal state.

    Solves for the generator subset with the same GF(2) image; expectations
    multiply as tanh weights over the subset. A phase mismatch between the
    query and the realized product is folded into the value and flagged.
    """
    if pauli.n != model.n:
        raise ValueError("length mismatch")
    if not pauli.x.any() and not pauli.z.any():
        return StabExpectation(pauli.phase, True, ())
    gmat = model.symplectic_matrix()
    sol = gf2_solve(gmat.T, pauli.symplectic_row())
    if sol is None:
        return StabExpectation(0.0, False)
    subset = tuple(int(i) for i in np.nonzero(sol)[0])
    prod = PauliWord(model.n, np.zeros(model.n), np.zeros(model.n))
    val = 1.0
    for i in subset:
        prod = prod.mul(model.generators[i])
        val *= np.tanh(model.betas[i])
    ratio = 1j ** ((pauli.phase_power - prod.phase_power) % 4)
    return StabExpectation(ratio * val, True, subset,
                           phase_flag=(ratio != 1.0))


# ----------------------------------------------------------------------------
# plaquette/vertex code builders
# ----------------------------------------------------------------------------

def _torus_edge_layout(lx: int, ly: int):
    """Qubits on edges of an lx x ly torus; coordinates on the doubled grid."""
    coords = []
    hid, vid = {}, {}
    for i in range(lx):
        for j in range(ly):
            hid[(i, j)] = len(coords)
            coords.append((2 * i, 2 * j + 1))
    for i in range(lx):
        for j in range(ly):
            vid[(i, j)] = len(coords)
            coords.append((2 * i + 1, 2 * j))
    lat = coordinate_lattice(2, (2 * lx, 2 * ly), True, coords)
    return lat, hid, vid


def _pauli_on(n, idxs, letter) -> tuple:
    x = np.zeros(n, dtype=np.uint8)
    z = np.zeros(n, dtype=np.uint8)
    for q in idxs:
        if letter == "X":
            x[q] = 1
        else:
            z[q] = 1
    return x, z


def toric2d_model(lx: int = 2, ly: int = 2, beta_plaquette: float = 1.0,
                  beta_vertex: float = 1.0) -> StabilizerModel:
    """Plaquette (Z) and vertex (X) generators on the torus, with one of each
    dropped so the remaining generators are independent."""
    lat, hid, vid = _torus_edge_layout(lx, ly)
    n = 2 * lx * ly
    gens, betas = [], []
    for i in range(lx):
        for j in range(ly):
            if (i, j) == (lx - 1, ly - 1):
                continue  # dependent: product of all plaquettes is identity
            edges = [hid[(i, j)], hid[((i + 1) % lx, j)],
                     vid[(i, j)], vid[(i, (j + 1) % ly)]]
            x, z = _pauli_on(n, edges, "Z")
            gens.append(PauliWord(n, x, z, 0, f"plaq{i}{j}"))
            betas.append(beta_plaquette)
    for i in range(lx):
        for j in range(ly):
            if (i, j) == (lx - 1, ly - 1):
                continue
            edges = [hid[(i, j)], hid[(i, (j - 1) % ly)],
                     vid[(i, j)], vid[((i - 1) % lx, j)]]
            x, z = _pauli_on(n, edges, "X")
            gens.append(PauliWord(n, x, z, 0, f"vert{i}{j}"))
            betas.append(beta_vertex)
    return StabilizerModel(n, gens, np.array(betas), lat)


def plaquette_index_map(model: StabilizerModel) -> dict:
    return {g.name: k for k, g in enumerate(model.generators)
            if g.name.startswith("plaq")}


def toric2d_full_rows(lx: int, ly: int) -> np.ndarray:
    """Symplectic rows of every plaquette and vertex term on the torus,
    dependents included (the boundary-algebra check needs the full
    Hamiltonian term list, not an independent subset)."""
    _lat, hid, vid = _torus_edge_layout(lx, ly)
    n = 2 * lx * ly
    rows = []
    for i in range(lx):
        for j in range(ly):
            edges = [hid[(i, j)], hid[((i + 1) % lx, j)],
                     vid[(i, j)], vid[(i, (j + 1) % ly)]]
            x, z = _pauli_on(n, edges, "Z")
            rows.append(np.concatenate([x, z]))
    for i in range(lx):
        for j in range(ly):
            edges = [hid[(i, j)], hid[(i, (j - 1) % ly)],
                     vid[(i, j)], vid[((i - 1) % lx, j)]]
            x, z = _pauli_on(n, edges, "X")
            rows.append(np.concatenate([x, z]))
    return np.array(rows, dtype=np.uint8)


def planar2d_model(lx: int, ly: int, beta: float = 1.0):
    """Open-boundary patch: complete plaquettes only, all vertex stars with
    their existing edges, one star dropped for independence.

    Returns (model, plaquette name map, edge id maps).
    """
    coords = []
    hid, vid = {}, {}
    for i in range(lx):
        for j in range(ly - 1):
            hid[(i, j)] = len(coords)
            coords.append((2 * i, 2 * j + 1))
    for i in range(lx - 1):
        for j in range(ly):
            vid[(i, j)] = len(coords)
            coords.append((2 * i + 1, 2 * j))
    n = len(coords)
    lat = coordinate_lattice(2, (4 * lx, 4 * ly), False, coords)
    gens, betas = [], []
    for i in range(lx - 1):
        for j in range(ly - 1):
            edges = [hid[(i, j)], hid[(i + 1, j)], vid[(i, j)], vid[(i, j + 1)]]
            x, z = _pauli_on(n, edges, "Z")
            gens.append(PauliWord(n, x, z, 0, f"plaq{i}.{j}"))
            betas.append(beta)
    dropped = False
    full_rows = [g.symplectic_row() for g in gens]
    for i in range(lx):
        for j in range(ly):
            edges = []
            if (i, j) in hid:
                edges.append(hid[(i, j)])
            if (i, j - 1) in hid:
                edges.append(hid[(i, j - 1)])
            if (i, j) in vid:
                edges.append(vid[(i, j)])
            if (i - 1, j) in vid:
                edges.append(vid[(i - 1, j)])
            x, z = _pauli_on(n, edges, "X")
            word = PauliWord(n, x, z, 0, f"vert{i}.{j}")
            full_rows.append(word.symplectic_row())
            if not dropped:
                dropped = True  # product of all stars is identity on the patch
                continue
            gens.append(word)
            betas.append(beta)
    model = StabilizerModel(n, gens, np.array(betas), lat)
    model.full_rows = np.array(full_rows, dtype=np.uint8)
    return model, hid, vid


def toric4d_generators(extent: int = 3):
    """Cube (Z) and edge (X) generators of the 4d plaquette-qubit code.

    Returns (generator symplectic matrix, qubit count, plaquette center
    coordinates on the doubled torus).
    """
    L = extent
    axes = list(range(4))
    pairs = [(i, j) for i in axes for j in axes if i < j]
    verts = list(itertools.product(range(L), repeat=4))
    qid = {}
    centers = []
    for v in verts:
        for (i, j) in pairs:
            qid[(v, (i, j))] = len(centers)
            c = [2 * x for x in v]
            c[i] += 1
            c[j] += 1
            centers.append(tuple(c))
    n = len(centers)

    def shift(v, ax, delta):
        w = list(v)
        w[ax] = (w[ax] + delta) % L
        return tuple(w)

    rows = []
    # cube terms: Z on the 6 faces of each 3-cell
    for v in verts:
        for trip in itertools.combinations(axes, 3):
            i, j, k = trip
            faces = []
            for (a, b) in ((i, j), (i, k), (j, k)):
                other = [ax for ax in trip if ax not in (a, b)][0]
                faces.append(qid[(v, (a, b))])
                faces.append(qid[(shift(v, other, 1), (a, b))])
            row = np.zeros(2 * n, dtype=np.uint8)
            for q in faces:
                row[q] ^= 1  # x part
            rows.append(row)
    # edge terms: X on the 6 plaquettes containing each edge
    for v in verts:
        for i in axes:
            plaqs = []
            for j in axes:
                if j == i:
                    continue
                a, b = min(i, j), max(i, j)
                plaqs.append(qid[(v, (a, b))])
                plaqs.append(qid[(shift(v, j, -1), (a, b))])
            row = np.zeros(2 * n, dtype=np.uint8)
            for q in plaqs:
                row[n + q] ^= 1  # z part
            rows.append(row)
    # cube rows act with Z, edge rows with X: swap halves so x|z is correct
    mat = np.array(rows, dtype=np.uint8)
    out = np.zeros_like(mat)
    out[:, :n] = mat[:, n:]
    out[:, n:] = mat[:, :n]
    return out, n, centers


def toric4d_ball(extent: int, centers, radius: int, center_coord=None) -> list:
    """Qubit ids whose doubled-torus coordinates lie within L1 radius."""
    L2 = 2 * extent
    c0 = center_coord if center_coord is not None else (1, 1, 0, 0)
    ball = []
    for q, c in enumerate(centers):
        d = sum(min(abs(a - b), L2 - abs(a - b)) for a, b in zip(c, c0))
        if d <= radius:
            ball.append(q)
    return ball


# ----------------------------------------------------------------------------
# loop correlators and the boundary-algebra check
# ----------------------------------------------------------------------------

@dataclass
class LoopCorrelatorReport:
    exp_inner: float
    exp_outer: float
    exp_joint: float
    connected: float
    bound: float
    ground_distance: float | None
    formula_vs_stab: float
    dense_residual: float | None


def toric2d_loop_correlators(lx: int, ly: int, plaqs_a, plaqs_b,
                             beta_inner: float, beta_outer: float,
                             dense_check: bool = True) -> LoopCorrelatorReport:
    """Exact loop-pair statistics on the torus with the region-A plaquettes
    held at beta_inner and everything else at beta_outer.

    plaqs_a and plaqs_b are plaquette name tuples (i, j); A must nest in B.
    The reported bound is (1 - eps) * (1 - tanh(beta_inner)^(2 N_A)) with
    eps the measured trace distance between the uniform beta_outer state and
    the ground projector state (dense, when within reach).
    """
    plaqs_a, plaqs_b = set(map(tuple, plaqs_a)), set(map(tuple, plaqs_b))
    if not plaqs_a <= plaqs_b:
        raise ValueError("inner plaquette set must nest inside the outer one")
    model = toric2d_model(lx, ly, beta_outer, beta_outer)
    names = {g.name: k for k, g in enumerate(model.generators)}
    missing = [p for p in plaqs_b if f"plaq{p[0]}{p[1]}" not in names]
    if missing:
        raise ValueError(f"plaquettes {missing} are not independent generators")
    betas = model.betas.copy()
    for p in plaqs_a:
        betas[names[f"plaq{p[0]}{p[1]}"]] = beta_inner
    model = model.with_betas(betas)

    def loop(plaqs):
        w = PauliWord(model.n, np.zeros(model.n), np.zeros(model.n))
        for p in sorted(plaqs):
            w = w.mul(model.generators[names[f"plaq{p[0]}{p[1]}"]])
        return w

    o1, o2 = loop(plaqs_a), loop(plaqs_b)
    na, nb = len(plaqs_a), len(plaqs_b)
    ti, to = np.tanh(beta_inner), np.tanh(beta_outer)
    f1, f2, f12 = ti ** na, (ti ** na) * (to ** (nb - na)), to ** (nb - na)
    s1 = stab_expectation(model, o1).real
    s2 = stab_expectation(model, o2).real
    s12 = stab_expectation(model, o1.mul(o2)).real
    formula_gap = max(abs(f1 - s1), abs(f2 - s2), abs(f12 - s12))
    connected = f12 - f1 * f2

    dense_residual = None
    ground_distance = None
    if dense_check and 2 ** model.n <= 2 ** 12:
        rho = model.gibbs_dense()
        sites = tuple(range(model.n))
        d1 = float(np.real(np.trace(
            embed_operator(o1.dense(sites=sites), sites, sites) @ rho.matrix)))
        d2 = float(np.real(np.trace(o2.dense(sites=sites) @ rho.matrix)))
        d12 = float(np.real(np.trace(
            o1.mul(o2).dense(sites=sites) @ rho.matrix)))
        dense_residual = max(abs(d1 - f1), abs(d2 - f2), abs(d12 - f12))
        uniform = toric2d_model(lx, ly, beta_outer, beta_outer)
        rho_u = uniform.gibbs_dense()
        pi = uniform.ground_projector_dense()
        pi = pi / np.trace(pi).real
        ground_distance = trace_norm(rho_u.matrix - pi)
    eps = ground_distance if ground_distance is not None else 0.0
    bound = (1.0 - eps) * (1.0 - ti ** (2 * na))
    return LoopCorrelatorReport(f1, f2, f12, connected, bound,
                                ground_distance, formula_gap, dense_residual)


@dataclass
class AlgebraEqualityReport:
    equal: bool
    witness: PauliWord | None
    rank_generated: int
    rank_supported: int


def boundary_algebra_equality(generator_matrix, n_qubits: int,
                              region_a) -> AlgebraEqualityReport:
    """Is every stabilizer-group element supported outside region A a product
    of generators themselves supported outside A?

    Pure GF(2): the group elements vanishing on A's columns form the null
    space of the A-column block; their complement-restricted span is compared
    with the span of the A-avoiding generator rows.
    """
    g = _gf2(generator_matrix)
    region_a = sorted(set(int(q) for q in region_a))
    cols_a = [q for q in region_a] + [n_qubits + q for q in region_a]
    cols_rest = [c for c in range(2 * n_qubits) if c not in set(cols_a)]
    if region_a:
        ga = g[:, cols_a]
        # rows c with c @ ga == 0  <=>  ga.T @ c == 0
        null = gf2_nullspace(ga.T)
        elements = (null @ g) % 2 if len(null) else np.zeros((0, 2 * n_qubits),
                                                             dtype=np.uint8)
    else:
        elements = g.copy()
    supported = elements[:, cols_rest]
    avoid_rows = g[~g[:, cols_a].any(axis=1)] if region_a else g
    generated = avoid_rows[:, cols_rest]
    r_sup = gf2_rank(supported)
    r_gen = gf2_rank(generated)
    if r_sup == r_gen:
        return AlgebraEqualityReport(True, None, r_gen, r_sup)
    rref, pivots = gf2_rref(generated)
    rref = rref[: len(pivots)]
    witness = None
    for row in supported:
        res = _row_reduce_against(rref, pivots, row)
        if res.any():
            w = np.zeros(2 * n_qubits, dtype=np.uint8)
            w[cols_rest] = res
            witness = PauliWord(n_qubits, w[:n_qubits], w[n_qubits:], 0,
                                "witness")
            break
    return AlgebraEqualityReport(False, witness, r_gen, r_sup)


# ----------------------------------------------------------------------------
# strong-symmetry disorder parameter
# ----------------------------------------------------------------------------

def _check_flip_symmetric(family) -> None:
    for t in family.terms:
        k = t.region.size
        gx = np.array([[1.0 + 0j]])
        for _ in range(k):
            gx = np.kron(gx, PAULI["X"])
        if np.abs(t.matrix @ gx - gx @ t.matrix).max() > 1e-10:
            raise ValueError(f"term {t.name or '?'} breaks the spin-flip symmetry")


def ising_disorder_parameter(family, region) -> float:
    """Trace norm of the X-restricted flip operator weighted by the thermal
    state: || Tr_X(g_X rho) ||_1. Exactly zero for diagonal states."""
    from .model import gibbs_state
    _check_flip_symmetric(family)
    xs = tuple(region.sorted_sites() if isinstance(region, Region)
               else sorted(region))
    rho = gibbs_state(family)
    gx = np.array([[1.0 + 0j]])
    for _ in xs:
        gx = np.kron(gx, PAULI["X"])
    g_full = embed_operator(gx, xs, rho.labels)
    rest = tuple(s for s in rho.labels if s not in set(xs))
    m = partial_trace(g_full @ rho.matrix, rho.labels, rest)
    return trace_norm(m)


def symmetric_depolarizer_gap(family, region) -> tuple:
    """Trace distance between sector-resolved and plain depolarization of the
    thermal state on the region, together with the disorder parameter.

    The two are equal as operators identities; both are returned so the
    equality can be asserted numerically.
    """
    from .model import gibbs_state
    from .recovery import _tensor_on_labels
    _check_flip_symmetric(family)
    xs = tuple(region.sorted_sites() if isinstance(region, Region)
               else sorted(region))
    rho = gibbs_state(family)
    labels = rho.labels
    rest = tuple(s for s in labels if s not in set(xs))
    dx = 2 ** len(xs)
    gx = np.array([[1.0 + 0j]])
    for _ in xs:
        gx = np.kron(gx, PAULI["X"])
    p_plus = (np.eye(dx) + gx) / 2.0
    p_minus = (np.eye(dx) - gx) / 2.0
    g_plus = embed_operator(p_plus, xs, labels)
    g_minus = embed_operator(p_minus, xs, labels)
    rho_pp = g_plus @ rho.matrix @ g_plus
    rho_mm = g_minus @ rho.matrix @ g_minus
    plain = _tensor_on_labels(np.eye(dx) / dx,
                              xs,
                              partial_trace(rho.matrix, labels, rest),
                              rest, labels)
    sym = (_tensor_on_labels(p_plus, xs,
                             partial_trace(rho_pp, labels, rest), rest, labels)
           + _tensor_on_labels(p_minus, xs,
                               partial_trace(rho_mm, labels, rest), rest, labels)
           ) * (2.0 ** (1 - len(xs)))
    gap = trace_norm(sym - plain)
    disorder = ising_disorder_parameter(family, region)
    return gap, disorder
