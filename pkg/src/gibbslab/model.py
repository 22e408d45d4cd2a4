"""Lattice geometry, regions, interaction families, and exact thermal states."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .qcore import (
    DenseState,
    PAULI,
    ResourceLimitError,
    embed_operator,
    partial_trace,
)

__all__ = [
    "GeometryError",
    "Lattice",
    "Region",
    "AnnulusPartition",
    "BlockPartition",
    "InteractionTerm",
    "InteractionFamily",
    "build_lattice",
    "coordinate_lattice",
    "annulus_partition",
    "block_partition",
    "gibbs_state",
    "ground_state_projector",
    "AlgebraBasis",
    "local_algebra",
    "ising_chain",
    "tfim_chain",
    "heisenberg_chain",
    "toric2d_family",
    "load_family",
    "DIM_CAP",
]

DIM_CAP = 2 ** 13


class GeometryError(ValueError):
    """Invalid lattice geometry or region request."""


@dataclass(frozen=True)
class Lattice:
    """Finite set of sites with integer coordinates and a wrap-aware L1 metric.

    `extents` are per-axis periods used for the metric; `coords` lists the
    occupied sites (the full grid for ordinary lattices, edge midpoints for
    codes with qubits on links).
    """

    dimension: int
    extents: tuple
    periodic: tuple
    coords: tuple

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    def index(self, coord) -> int:
        try:
            return self.coords.index(tuple(coord))
        except ValueError:
            raise GeometryError(f"no site at {tuple(coord)}") from None

    def site(self, i: int) -> tuple:
        return self.coords[i]

    def distance(self, a: int, b: int) -> int:
        total = 0
        ca, cb = self.coords[a], self.coords[b]
        for ax in range(self.dimension):
            d = abs(ca[ax] - cb[ax])
            if self.periodic[ax]:
                d = min(d, self.extents[ax] - d)
            total += d
        return total

    def region(self, sites) -> "Region":
        return Region(self, frozenset(int(s) for s in sites))

    def ball(self, center: int, radius: int) -> "Region":
        return self.region(s for s in range(self.n_sites)
                           if self.distance(center, s) <= radius)

    def all_sites(self) -> "Region":
        return self.region(range(self.n_sites))

    @property
    def diameter(self) -> int:
        n = self.n_sites
        return max(self.distance(a, b) for a in range(n) for b in range(a, n))

    @property
    def adjacency_scale(self) -> int:
        """Smallest nonzero pairwise distance; 1 on ordinary grids, 2 when
        sites live on edge midpoints of a doubled grid."""
        best = None
        n = self.n_sites
        for a in range(n):
            for b in range(a + 1, n):
                d = self.distance(a, b)
                if d == 1:
                    return 1
                if d > 0 and (best is None or d < best):
                    best = d
        return best if best is not None else 1


def build_lattice(dimension: int, extents, periodic=False) -> Lattice:
    """Regular hypercubic lattice with one site per grid point."""
    extents = tuple(int(e) for e in (extents if hasattr(extents, "__len__")
                                     else [extents]))
    if dimension < 1 or len(extents) != dimension or any(e < 1 for e in extents):
        raise GeometryError(f"invalid geometry: dimension {dimension}, extents {extents}")
    if isinstance(periodic, bool):
        periodic = (periodic,) * dimension
    periodic = tuple(bool(p) for p in periodic)
    coords = tuple(itertools.product(*[range(e) for e in extents]))
    return Lattice(dimension, extents, periodic, coords)


def coordinate_lattice(dimension, extents, periodic, coords) -> Lattice:
    """Lattice over an explicit coordinate list (e.g. edge midpoints on a
    doubled grid). The metric is wrap-aware L1 on the given coordinates."""
    if isinstance(periodic, bool):
        periodic = (periodic,) * dimension
    return Lattice(dimension, tuple(extents), tuple(periodic),
                   tuple(tuple(c) for c in coords))


@dataclass(frozen=True)
class Region:
    lattice: Lattice
    sites: frozenset

    @property
    def size(self) -> int:
        return len(self.sites)

    def sorted_sites(self) -> tuple:
        return tuple(sorted(self.sites))

    @property
    def diameter(self) -> int:
        s = self.sorted_sites()
        if len(s) <= 1:
            return 0
        return max(self.lattice.distance(a, b)
                   for a, b in itertools.combinations(s, 2))

    def dilate(self, l: int) -> "Region":
        if not self.sites:
            return self
        return Region(self.lattice, frozenset(
            t for t in range(self.lattice.n_sites)
            if min(self.lattice.distance(t, s) for s in self.sites) <= l))

    def distance_to(self, other: "Region") -> int:
        if not self.sites or not other.sites:
            raise GeometryError("distance to an empty region is undefined")
        return min(self.lattice.distance(a, b)
                   for a in self.sites for b in other.sites)

    def complement(self) -> "Region":
        return Region(self.lattice,
                      frozenset(range(self.lattice.n_sites)) - self.sites)

    def union(self, *others) -> "Region":
        s = set(self.sites)
        for o in others:
            s |= o.sites
        return Region(self.lattice, frozenset(s))

    def is_connected(self) -> bool:
        if not self.sites:
            return True
        step = self.lattice.adjacency_scale
        todo = {next(iter(self.sites))}
        seen = set()
        while todo:
            x = todo.pop()
            seen.add(x)
            todo |= {y for y in self.sites
                     if y not in seen and self.lattice.distance(x, y) <= step}
        return seen == self.sites


@dataclass(frozen=True)
class AnnulusPartition:
    """Center ball A, buffer shells B1/B2, and outer remainder C."""

    a: Region
    b1: Region
    b2: Region
    c: Region
    radii: tuple

    @property
    def b(self) -> Region:
        return self.b1.union(self.b2)

    def separation(self) -> int:
        return self.a.distance_to(self.c)


def annulus_partition(lattice: Lattice, center: int, r_a: int, r_1: int,
                      r_2: int, allow_empty_outer: bool = False) -> AnnulusPartition:
    """Ball of radius r_a around `center`, then shells of widths r_1 and r_2.

    The remainder C must be nonempty unless `allow_empty_outer` is set (used
    when a gate legitimately covers the whole lattice).
    """
    if min(r_a, r_1, r_2) < 0:
        raise GeometryError("radii must be nonnegative")
    a = lattice.ball(center, r_a)
    dist = {s: min(lattice.distance(s, x) for x in a.sites)
            for s in range(lattice.n_sites)}
    b1 = lattice.region(s for s, d in dist.items() if 1 <= d <= r_1)
    b2 = lattice.region(s for s, d in dist.items() if r_1 < d <= r_1 + r_2)
    c = lattice.region(s for s, d in dist.items() if d > r_1 + r_2)
    if not c.sites and not allow_empty_outer:
        raise GeometryError("shells exhaust the lattice; no outer region left")
    if c.sites:
        sep = a.distance_to(c)
        if sep <= max(r_1 + r_2, 0):
            raise GeometryError(f"separation invariant failed: d(A,C) = {sep}")
    return AnnulusPartition(a, b1, b2, c, (r_a, r_1, r_2))


@dataclass(frozen=True)
class InteractionTerm:
    region: Region
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.shape[0] != 2 ** self.region.size:
            raise ValueError("term matrix does not match its support size")
        if np.abs(m - m.conj().T).max() > 1e-10:
            raise ValueError(f"term {self.name or '?'} is not Hermitian")
        if np.linalg.norm(m, 2) > 1.0 + 1e-9:
            raise ValueError(f"term {self.name or '?'} has operator norm > 1")


@dataclass(frozen=True)
class InteractionFamily:
    """Fixed list of local terms with per-term real couplings."""

    lattice: Lattice
    terms: tuple
    couplings: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        c = np.asarray(self.couplings, dtype=float)
        if c.shape != (len(self.terms),):
            raise ValueError("one coupling per term required")
        object.__setattr__(self, "couplings", c)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def interaction_range(self) -> int:
        return max((t.region.diameter for t in self.terms), default=0)

    @property
    def sup_coupling(self) -> float:
        return float(np.abs(self.couplings).max()) if len(self.terms) else 0.0

    @property
    def term_density(self) -> float:
        return len(self.terms) / max(self.n_sites, 1)

    def with_couplings(self, couplings) -> "InteractionFamily":
        return replace(self, couplings=np.asarray(couplings, dtype=float))

    def perturbed(self, delta) -> "InteractionFamily":
        return self.with_couplings(self.couplings + np.asarray(delta, dtype=float))

    def term_matrix_full(self, i: int) -> np.ndarray:
        t = self.terms[i]
        return embed_operator(t.matrix, t.region.sorted_sites(),
                              tuple(range(self.n_sites)))

    def hamiltonian_diagonal(self) -> np.ndarray:
        """Diagonal of the Hamiltonian as a vector (diagonal families only)."""
        if not self.is_diagonal():
            raise ValueError("family is not diagonal")
        d = 2 ** self.n_sites
        out = np.zeros(d)
        idx = np.arange(d)
        for i, t in enumerate(self.terms):
            if self.couplings[i] == 0.0:
                continue
            sites = t.region.sorted_sites()
            sub = np.zeros(d, dtype=np.int64)
            for j, s in enumerate(sites):
                bit = (idx >> (self.n_sites - 1 - s)) & 1
                sub |= bit << (len(sites) - 1 - j)
            out += self.couplings[i] * np.real(np.diag(t.matrix))[sub]
        return out

    def hamiltonian(self) -> np.ndarray:
        d = 2 ** self.n_sites
        if d > DIM_CAP:
            raise ResourceLimitError(f"dense Hamiltonian dimension {d} exceeds cap {DIM_CAP}")
        if self.is_diagonal():
            return np.diag(self.hamiltonian_diagonal()).astype(complex)
        h = np.zeros((d, d), dtype=complex)
        for i, t in enumerate(self.terms):
            if self.couplings[i] != 0.0:
                h += self.couplings[i] * self.term_matrix_full(i)
        return h

    def is_commuting(self, atol: float = 1e-10) -> bool:
        for i, j in itertools.combinations(range(len(self.terms)), 2):
            ti, tj = self.terms[i], self.terms[j]
            if not (ti.region.sites & tj.region.sites):
                continue
            joint = tuple(sorted(ti.region.sites | tj.region.sites))
            a = embed_operator(ti.matrix, ti.region.sorted_sites(), joint)
            b = embed_operator(tj.matrix, tj.region.sorted_sites(), joint)
            if np.abs(a @ b - b @ a).max() > atol:
                return False
        return True

    def is_diagonal(self, atol: float = 1e-12) -> bool:
        return all(np.abs(t.matrix - np.diag(np.diag(t.matrix))).max() <= atol
                   for t in self.terms)

    def terms_supported_in(self, region: Region):
        return [i for i, t in enumerate(self.terms)
                if t.region.sites <= region.sites]


def gibbs_state(family: InteractionFamily, dim_cap: int = DIM_CAP) -> DenseState:
    """exp(-sum_Z beta_Z h_Z) / Z as a certified dense state."""
    d = 2 ** family.n_sites
    if d > dim_cap:
        raise ResourceLimitError(f"dimension {d} exceeds cap {dim_cap}")
    if family.is_diagonal():
        hd = family.hamiltonian_diagonal()
        w = np.exp(-(hd - hd.min()))
        w /= w.sum()
        return DenseState(np.diag(w).astype(complex),
                          tuple(range(family.n_sites)))
    h = family.hamiltonian()
    ev, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    w = np.exp(-(ev - ev.min()))
    w /= w.sum()
    rho = (u * w) @ u.conj().T
    return DenseState(rho, tuple(range(family.n_sites)))


def ground_state_projector(family: InteractionFamily, atol: float = 1e-8):
    """Projector onto the lowest-eigenvalue subspace and its rank."""
    if family.is_diagonal():
        hd = family.hamiltonian_diagonal()
        mask = hd <= hd.min() + atol * max(1.0, abs(hd.min()))
        return np.diag(mask.astype(complex)), int(mask.sum())
    h = family.hamiltonian()
    ev, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    mask = ev <= ev.min() + atol * max(1.0, abs(ev.min()))
    rank = int(mask.sum())
    pi = (u[:, mask] @ u[:, mask].conj().T)
    return pi, rank


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple          # Regions
    centers: tuple         # site indices
    assignment: dict       # term index -> block index
    r_a: int
    overlap_width: int

    def block_couplings(self, family: InteractionFamily, block_idx: int) -> np.ndarray:
        mask = np.zeros_like(family.couplings)
        for t, b in self.assignment.items():
            if b == block_idx:
                mask[t] = 1.0
        return mask


def block_partition(lattice: Lattice, family: InteractionFamily,
                    r_a: int) -> BlockPartition:
    """Cover the lattice with balls of radius r_a on a grid of spacing
    2*r_a - R, and assign every term to the lexicographically smallest
    containing block center."""
    r = family.interaction_range
    if 2 * r_a <= r:
        raise GeometryError(f"need 2*r_a > interaction range ({r}); got r_a = {r_a}")
    spacing = 2 * r_a - r
    axes = []
    for ax in range(lattice.dimension):
        vals = sorted({c[ax] for c in lattice.coords})
        picked = vals[::spacing] if lattice.periodic[ax] or len(vals) <= 1 else vals[::spacing]
        # guarantee coverage of the tail on open axes
        if not lattice.periodic[ax] and picked[-1] < vals[-1]:
            picked = sorted(set(picked) | {vals[-1]})
        axes.append(picked)
    centers = []
    for coord in itertools.product(*axes):
        try:
            centers.append(lattice.index(coord))
        except GeometryError:
            continue
    centers = sorted(set(centers), key=lambda i: lattice.site(i))
    blocks = [lattice.ball(c, r_a) for c in centers]
    assignment = {}
    for ti, term in enumerate(family.terms):
        found = None
        for bi, blk in enumerate(blocks):
            if term.region.sites <= blk.sites:
                found = bi
                break
        if found is None:
            raise GeometryError(
                f"term {term.name or ti} fits in no block; increase r_a")
        assignment[ti] = found
    return BlockPartition(tuple(blocks), tuple(centers), assignment, r_a, r)


# ----------------------------------------------------------------------------
# local operator algebras
# ----------------------------------------------------------------------------

@dataclass
class AlgebraBasis:
    """Hilbert-Schmidt-orthonormal basis of an operator algebra on a region.

    `truncated` marks a basis whose closure hit a dimension cap; spans like
    that are still valid witness families but not the complete algebra.
    """

    region: Region
    basis: np.ndarray  # shape (k, d, d)
    truncated: bool = False

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def project(self, op: np.ndarray) -> np.ndarray:
        coeffs = np.einsum("kij,ij->k", self.basis.conj(), op)
        return np.einsum("k,kij->ij", coeffs, self.basis)

    def projection_residual(self, op: np.ndarray) -> float:
        return float(np.abs(op - self.project(op)).max())

    def hermitian_basis(self) -> np.ndarray:
        """Real-orthonormal basis of the Hermitian part of the span."""
        cand = []
        for b in self.basis:
            cand.append((b + b.conj().T) / 2)
            cand.append((b - b.conj().T) / 2j)
        basis = []
        for c in cand:
            for h in basis:
                c = c - np.real(np.einsum("ij,ij->", h.conj(), c)) * h
            nrm = np.sqrt(np.real(np.einsum("ij,ij->", c.conj(), c)))
            if nrm > 1e-9:
                basis.append(c / nrm)
        return np.array(basis)


ALGEBRA_SITE_CAP = 6


def _orthonormal_extend(basis: list, cands, tol: float = 1e-10,
                        max_dim: int | None = None) -> bool:
    """Grow an HS-orthonormal basis by the candidate residuals (vectorized
    projection, one re-orthogonalization pass for stability)."""
    cands = list(cands)
    if not cands:
        return False
    d = cands[0].shape[0]
    grew = False
    for chunk_start in range(0, len(cands), 256):
        chunk = cands[chunk_start:chunk_start + 256]
        flat = np.array([c.ravel() for c in chunk])
        for _ in range(2):
            if basis:
                bmat = np.array([b.ravel() for b in basis])
                flat = flat - (flat @ bmat.conj().T) @ bmat
            norms = np.linalg.norm(flat, axis=1)
            keep = norms > tol
            flat = flat[keep]
            if flat.size == 0:
                break
        for v in flat:
            for b in basis:
                v = v - (b.conj().ravel() @ v) * b.ravel()
            nrm = np.linalg.norm(v)
            if nrm > tol:
                basis.append((v / nrm).reshape(d, d))
                grew = True
                if max_dim is not None and len(basis) >= max_dim:
                    return grew
    return grew


def local_algebra(family: InteractionFamily, region: Region,
                  site_cap: int = ALGEBRA_SITE_CAP, max_word_length: int = 4,
                  n_random_words: int = 48, halo: int = 3,
                  max_dim: int | None = None, rng=None) -> AlgebraBasis:
    """Orthonormal basis of the algebra generated on `region` by partial
    traces of words in the interaction terms.

    Words are built from terms within a `halo`-neighborhood of the region
    (words containing a far, disconnected factor only rescale a shorter
    word's partial trace), partial-traced into the region, then closed under
    adjoints and products until the dimension stabilizes or `max_dim` is
    reached (a reached cap is recorded on the result). Diagonal families run
    entirely on diagonal vectors.
    """
    if region.size > site_cap:
        raise ResourceLimitError(
            f"algebra region of {region.size} sites exceeds cap {site_cap}")
    rng = np.random.default_rng(rng)
    sites = region.sorted_sites()
    d = 2 ** len(sites)
    cap = min(max_dim, d * d) if max_dim is not None else d * d
    if family.is_diagonal():
        return _local_algebra_diagonal(family, region, max_word_length,
                                       n_random_words, rng)
    near = region.dilate(halo)
    term_ids = [i for i, t in enumerate(family.terms)
                if t.region.sites & near.sites]
    ambient = sorted(set().union(
        *[family.terms[i].region.sites for i in term_ids], region.sites))
    ambient = tuple(ambient)
    full = [embed_operator(family.terms[i].matrix,
                           family.terms[i].region.sorted_sites(), ambient)
            for i in term_ids]
    dim_rest = 2 ** (len(ambient) - len(sites))

    def down(m):
        return partial_trace(m, ambient, sites) / dim_rest

    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    seeds = []
    words = [np.eye(2 ** len(ambient), dtype=complex)]
    per_level = max(8, 128 // max(len(full), 1))
    for _ in range(max_word_length):
        words = [w @ f for w in words for f in full]
        # seed with every word of this level before thinning for the next
        seeds.extend(down(w) for w in words)
        if len(words) > per_level:
            idx = rng.choice(len(words), size=per_level, replace=False)
            words = [words[i] for i in idx]
    for _ in range(n_random_words):
        length = int(rng.integers(1, 2 * max_word_length + 1))
        w = np.eye(2 ** len(ambient), dtype=complex)
        for _ in range(length):
            w = w @ full[int(rng.integers(len(full)))]
        seeds.append(down(w))
    _orthonormal_extend(basis, seeds, max_dim=cap)
    fresh = list(basis)
    truncated = False
    for _ in range(64):
        if len(basis) >= cap:
            truncated = len(basis) >= cap and cap < d * d
            break
        cands = [b.conj().T for b in fresh]
        cands += [a @ b for a in basis for b in fresh]
        cands += [b @ a for a in basis for b in fresh]
        before = len(basis)
        if not _orthonormal_extend(basis, cands, max_dim=cap):
            break
        fresh = basis[before:]
    return AlgebraBasis(region, np.array(basis[:cap]), truncated=truncated)


def _local_algebra_diagonal(family, region, max_word_length, n_random_words,
                            rng) -> AlgebraBasis:
    """Diagonal families generate diagonal algebras; words are elementwise
    products of diagonal vectors and partial traces are marginal sums."""
    n_all = family.n_sites
    sites = region.sorted_sites()
    d = 2 ** len(sites)
    diags = []
    for i, t in enumerate(family.terms):
        diags.append(np.real(np.diag(
            embed_operator(t.matrix, t.region.sorted_sites(),
                           tuple(range(n_all))))))
    diags = np.array(diags)

    def down(v):
        t = v.reshape((2,) * n_all)
        pos = [s for s in range(n_all)]
        keep = [pos.index(s) for s in sites]
        tr = [p for p in range(n_all) if p not in keep]
        t = t.transpose(keep + tr).reshape(d, -1)
        return t.sum(axis=1) / (2 ** (n_all - len(sites)))

    seed_vecs = [np.ones(d)]
    words = [np.ones(2 ** n_all)]
    for _ in range(max_word_length):
        words = [w * f for w in words for f in diags]
        if len(words) > 192:
            idx = rng.choice(len(words), size=192, replace=False)
            words = [words[i] for i in idx]
        seed_vecs.extend(down(w) for w in words)
    for _ in range(n_random_words):
        length = int(rng.integers(1, 2 * max_word_length + 1))
        w = np.ones(2 ** n_all)
        for _ in range(length):
            w = w * diags[int(rng.integers(len(diags)))]
        seed_vecs.append(down(w))
    # orthonormalize diagonal vectors, close under products
    basis = []
    def extend(vs):
        grew = False
        for v in vs:
            v = v.astype(complex)
            for b in basis:
                v = v - np.vdot(b, v) * b
            nrm = np.linalg.norm(v)
            if nrm > 1e-10:
                basis.append(v / nrm)
                grew = True
        return grew
    extend(seed_vecs)
    for _ in range(32):
        if not extend([a * b for a in basis for b in basis]) or len(basis) >= d:
            break
    mats = np.array([np.diag(v) for v in basis])
    return AlgebraBasis(region, mats)


# ----------------------------------------------------------------------------
# builtin families
# ----------------------------------------------------------------------------

def _chain(n, periodic):
    return build_lattice(1, [n], periodic)


def ising_chain(n: int, coupling: float = 1.0, field: float = 0.0,
                periodic: bool = True) -> InteractionFamily:
    """Classical ferromagnetic chain: terms -Z Z with optional -Z fields."""
    lat = _chain(n, periodic)
    zz = -np.kron(PAULI["Z"], PAULI["Z"])
    terms, coup = [], []
    bonds = n if periodic else n - 1
    for i in range(bonds):
        terms.append(InteractionTerm(lat.region([i, (i + 1) % n]), zz, f"zz{i}"))
        coup.append(coupling)
    if field != 0.0:
        for i in range(n):
            terms.append(InteractionTerm(lat.region([i]), -PAULI["Z"], f"z{i}"))
            coup.append(field)
    return InteractionFamily(lat, terms, np.array(coup))


def tfim_chain(n: int, coupling: float = 1.0, g: float = 1.0,
               periodic: bool = True) -> InteractionFamily:
    """Transverse-field chain: -Z Z bonds plus -X on every site."""
    lat = _chain(n, periodic)
    zz = -np.kron(PAULI["Z"], PAULI["Z"])
    terms, coup = [], []
    bonds = n if periodic else n - 1
    for i in range(bonds):
        terms.append(InteractionTerm(lat.region([i, (i + 1) % n]), zz, f"zz{i}"))
        coup.append(coupling)
    for i in range(n):
        terms.append(InteractionTerm(lat.region([i]), -PAULI["X"], f"x{i}"))
        coup.append(g)
    return InteractionFamily(lat, terms, np.array(coup))


def heisenberg_chain(n: int, jx: float = 1.0, jy: float = 1.0, jz: float = 1.0,
                     periodic: bool = True) -> InteractionFamily:
    lat = _chain(n, periodic)
    terms, coup = [], []
    bonds = n if periodic else n - 1
    for i in range(bonds):
        m = (jx * np.kron(PAULI["X"], PAULI["X"])
             + jy * np.kron(PAULI["Y"], PAULI["Y"])
             + jz * np.kron(PAULI["Z"], PAULI["Z"]))
        nrm = np.linalg.norm(m, 2)
        terms.append(InteractionTerm(lat.region([i, (i + 1) % n]), m / nrm, f"heis{i}"))
        coup.append(nrm)
    c = np.array(coup)
    return InteractionFamily(lat, terms, c / max(1.0, c.max()))


def toric2d_family(lx: int = 2, ly: int = 2, beta_plaquette: float = 1.0,
                   beta_vertex: float = 1.0) -> InteractionFamily:
    """Dense interaction family of the 2d plaquette/vertex code on a torus.

    Qubits live on edges (doubled-coordinate lattice). One plaquette and one
    vertex term are dropped so the remaining generators are independent.
    """
    from .stabilizer import toric2d_model  # local import to avoid a cycle

    model = toric2d_model(lx, ly, beta_plaquette, beta_vertex)
    lat = model.lattice
    terms, coup = [], []
    for g, beta in zip(model.generators, model.betas):
        sites = g.support()
        sub = g.dense(sites)
        terms.append(InteractionTerm(lat.region(sites), -sub, g.name or "stab"))
        coup.append(beta)
    return InteractionFamily(lat, terms, np.array(coup))


_BUILTINS = {
    "ising_chain": ising_chain,
    "tfim_chain": tfim_chain,
    "heisenberg_chain": heisenberg_chain,
    "toric2d": toric2d_family,
}


def load_family(source) -> InteractionFamily:
    """Build a family from a declarative config (dict, JSON, or TOML path).

    Either {"name": <builtin>, "params": {...}} or an explicit
    {"lattice": {...}, "terms": [{"sites": [...], "matrix": [[re, im], ...],
    "coupling": x}, ...]} with row-major complex pairs.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "read"):
        text = source.read() if hasattr(source, "read") else open(source).read()
        try:
            spec = json.loads(text)
        except json.JSONDecodeError:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            spec = tomllib.loads(text)
    else:
        spec = dict(source)
    if "name" in spec:
        name = spec["name"]
        if name not in _BUILTINS:
            raise ValueError(f"unknown builtin family {name!r}")
        return _BUILTINS[name](**spec.get("params", {}))
    lat_spec = spec["lattice"]
    lat = build_lattice(lat_spec["dimension"], lat_spec["extents"],
                        lat_spec.get("periodic", False))
    terms, coup = [], []
    for i, t in enumerate(spec["terms"]):
        pairs = np.asarray(t["matrix"], dtype=float).reshape(-1, 2)
        d = int(round(np.sqrt(pairs.shape[0])))
        m = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(d, d)
        terms.append(InteractionTerm(lat.region(t["sites"]), m,
                                     t.get("name", f"term{i}")))
        coup.append(float(t.get("coupling", 1.0)))
    return InteractionFamily(lat, terms, np.array(coup))
