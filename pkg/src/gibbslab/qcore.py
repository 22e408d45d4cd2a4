"""Dense exact quantum kernel.

Operators and states are plain complex ndarrays over an ordered tuple of
site labels (one qubit per label). Everything here is pure-functional:
inputs are never mutated, outputs are fresh arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PAULI",
    "DenseOperator",
    "DenseState",
    "ChannelGate",
    "SuperopGate",
    "LabelError",
    "PartitionError",
    "NumericalIntegrityError",
    "ResourceLimitError",
    "kron_all",
    "embed_operator",
    "partial_trace",
    "matrix_function",
    "trace_norm",
    "trace_norm_variational_lb",
    "trace_distance",
    "fidelity",
    "entropy",
    "mutual_information",
    "cmi",
    "vec",
    "unvec",
    "superoperator_of",
    "choi_of_superoperator",
    "is_completely_positive",
    "is_trace_preserving",
    "apply_gate",
    "identity_gate",
    "depolarizing_gate",
    "reset_gate",
    "induced_trace_norm_lb",
    "random_density_matrix",
    "random_hermitian",
    "save_operator",
    "load_operator",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

STATE_ATOL = 1e-10
CHANNEL_ATOL = 1e-7


class LabelError(ValueError):
    """A referenced site label is unknown or duplicated."""


class PartitionError(ValueError):
    """Regions passed as a partition overlap or fail to cover the labels."""


class NumericalIntegrityError(RuntimeError):
    """A certified numerical invariant (positivity, trace, CP/TP) failed."""


class ResourceLimitError(RuntimeError):
    """A dense computation would exceed the configured dimension cap."""


def _as_array(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _check_labels(labels) -> tuple:
    labels = tuple(labels)
    if len(set(labels)) != len(labels):
        raise LabelError(f"duplicate site labels: {labels}")
    return labels


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def kron_all(mats) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def embed_operator(op, op_labels, all_labels) -> np.ndarray:
    """Embed `op` (acting on `op_labels`, in that order) into the space of
    `all_labels`, with identity on the remaining factors."""
    op = _as_array(op)
    op_labels = _check_labels(op_labels)
    all_labels = _check_labels(all_labels)
    if not set(op_labels) <= set(all_labels):
        raise LabelError(f"operator labels {op_labels} not within {all_labels}")
    if op.shape[0] != 2 ** len(op_labels):
        raise ValueError("operator dimension does not match its label count")
    n = len(all_labels)
    rest = [s for s in all_labels if s not in op_labels]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    src = list(op_labels) + rest
    perm = [src.index(s) for s in all_labels]
    t = full.reshape((2,) * (2 * n))
    t = t.transpose(perm + [n + p for p in perm])
    d = 2 ** n
    return np.ascontiguousarray(t.reshape(d, d))


def partial_trace(m, all_labels, keep_labels) -> np.ndarray:
    """Trace out all factors except `keep_labels`.

    The returned operator is ordered by the position of the kept labels in
    `all_labels`.
    """
    m = _as_array(m)
    all_labels = _check_labels(all_labels)
    keep = [s for s in all_labels if s in set(keep_labels)]
    if len(keep) != len(set(keep_labels)):
        raise LabelError(f"kept labels {tuple(keep_labels)} not within {all_labels}")
    n = len(all_labels)
    if m.shape[0] != 2 ** n:
        raise ValueError("matrix dimension does not match the label count")
    pos_keep = [all_labels.index(s) for s in keep]
    pos_tr = [i for i in range(n) if i not in pos_keep]
    t = m.reshape((2,) * (2 * n))
    perm = pos_keep + pos_tr
    t = t.transpose(perm + [n + p for p in perm])
    dk, dt = 2 ** len(pos_keep), 2 ** len(pos_tr)
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("aibi->ab", t)


@dataclass(frozen=True)
class DenseOperator:
    """A dense operator together with the ordered site labels it acts on."""

    matrix: np.ndarray
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_array(self.matrix))
        object.__setattr__(self, "labels", _check_labels(self.labels))
        if self.matrix.shape[0] != 2 ** len(self.labels):
            raise ValueError("dimension is not 2**len(labels)")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expect(self, observable) -> float:
        return float(np.real(np.trace(_as_array(observable) @ self.matrix)))


@dataclass(frozen=True)
class DenseState(DenseOperator):
    """A density matrix with positivity/trace certification."""

    atol: float = STATE_ATOL

    def __post_init__(self):
        super().__post_init__()
        m = self.matrix
        herm_err = float(np.abs(m - m.conj().T).max())
        if herm_err > self.atol:
            raise NumericalIntegrityError(f"state not Hermitian: {herm_err:.3e}")
        off = m - np.diag(np.diag(m))
        if np.abs(off).max() < 1e-15:
            ev = np.real(np.diag(m))
        else:
            ev = np.linalg.eigvalsh(_hermitize(m))
        if ev.min() < -self.atol:
            raise NumericalIntegrityError(f"state not PSD: min eig {ev.min():.3e}")
        tr_err = abs(float(np.real(np.trace(m))) - 1.0)
        if tr_err > self.atol:
            raise NumericalIntegrityError(f"state trace off by {tr_err:.3e}")

    def marginal(self, keep_labels) -> "DenseState":
        kept = tuple(s for s in self.labels if s in set(keep_labels))
        return DenseState(partial_trace(self.matrix, self.labels, kept), kept,
                          atol=max(self.atol, 1e-9))


def matrix_function(m, kind: str, p: float | None = None,
                    pinv_threshold: float = 1e-12) -> np.ndarray:
    """Hermitian matrix function via eigendecomposition.

    kind is one of 'exp', 'log', 'power'. Negative powers and log use a
    pseudo-inverse convention: eigenvalues below pinv_threshold * max are
    treated as exact zeros.
    """
    m = _as_array(m)
    herm_err = float(np.abs(m - m.conj().T).max())
    if kind in ("log", "power") and herm_err > 1e-9:
        raise ValueError(f"{kind} requires a Hermitian input (deviation {herm_err:.2e})")
    ev, u = np.linalg.eigh(_hermitize(m))
    if kind == "exp":
        f = np.exp(ev)
    elif kind == "log":
        cut = pinv_threshold * max(ev.max(), 0.0)
        safe = np.where(ev > cut, ev, 1.0)
        f = np.where(ev > cut, np.log(safe), 0.0)
    elif kind == "power":
        if p is None:
            raise ValueError("power requires an exponent")
        evc = np.clip(ev, 0.0, None)
        cut = pinv_threshold * max(evc.max(), 0.0)
        if p < 0:
            safe = np.where(evc > cut, evc, 1.0)
            f = np.where(evc > cut, safe ** p, 0.0)
        else:
            f = evc ** p
    else:
        raise ValueError(f"unknown function tag {kind!r}")
    return (u * f) @ u.conj().T


def trace_norm(m) -> float:
    m = _as_array(m)
    if np.abs(m - m.conj().T).max() < 1e-12:
        return float(np.abs(np.linalg.eigvalsh(_hermitize(m))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def trace_norm_variational_lb(m, n_samples: int = 16, rng=None) -> float:
    """Lower bound on the trace norm from sampled unit-norm witnesses.

    For Hermitian input the sign function of the operator itself is included,
    which makes the bound tight in that case.
    """
    m = _as_array(m)
    rng = np.random.default_rng(rng)
    best = 0.0
    if np.abs(m - m.conj().T).max() < 1e-12:
        ev, u = np.linalg.eigh(_hermitize(m))
        sgn = (u * np.sign(ev)) @ u.conj().T
        best = float(np.real(np.trace(m @ sgn)))
    d = m.shape[0]
    for _ in range(n_samples):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        q, _ = np.linalg.qr(g)
        best = max(best, abs(float(np.real(np.trace(m @ q)))))
    return best


def trace_distance(a, b) -> float:
    """Unhalved trace-norm distance."""
    return trace_norm(_as_array(a) - _as_array(b))


def fidelity(rho, sigma) -> float:
    """Square-root fidelity, the trace norm of sqrt(rho) sqrt(sigma)."""
    rho, sigma = _as_array(rho), _as_array(sigma)
    for name, s in (("first", rho), ("second", sigma)):
        if np.abs(s - s.conj().T).max() > 1e-8 or abs(np.trace(s).real - 1) > 1e-6:
            raise ValueError(f"{name} argument is not a state")
    ev, u = np.linalg.eigh(_hermitize(rho))
    sq = (u * np.sqrt(np.clip(ev, 0, None))) @ u.conj().T
    inner = np.linalg.eigvalsh(_hermitize(sq @ sigma @ sq))
    f = float(np.sqrt(np.clip(inner, 0, None)).sum())
    return min(f, 1.0) if f < 1.0 + 1e-9 else f


def entropy(rho) -> float:
    """Von Neumann entropy in bits."""
    ev = np.linalg.eigvalsh(_hermitize(_as_array(rho)))
    ev = ev[ev > 1e-18]
    return float(-(ev * np.log2(ev)).sum())


def mutual_information(state: DenseState, region_x, region_y) -> float:
    x, y = tuple(region_x), tuple(region_y)
    sx = entropy(partial_trace(state.matrix, state.labels, x))
    sy = entropy(partial_trace(state.matrix, state.labels, y))
    sxy = entropy(partial_trace(state.matrix, state.labels, x + y))
    return sx + sy - sxy


def cmi(state: DenseState, region_a, region_b, region_c) -> float:
    """Conditional mutual information S(AB)+S(BC)-S(B)-S(ABC) in bits.

    The three regions must partition the state's labels. Values in
    (-1e-9, 0) are clipped to zero; anything below that violates strong
    subadditivity and raises.
    """
    a, b, c = set(region_a), set(region_b), set(region_c)
    if a & b or a & c or b & c or (a | b | c) != set(state.labels):
        raise PartitionError("regions must partition the state labels")
    m, labels = state.matrix, state.labels
    sab = entropy(partial_trace(m, labels, tuple(a | b)))
    sbc = entropy(partial_trace(m, labels, tuple(b | c)))
    sb = entropy(partial_trace(m, labels, tuple(b))) if b else 0.0
    sabc = entropy(m)
    val = sab + sbc - sb - sabc
    if val < -1e-9:
        raise NumericalIntegrityError(f"CMI = {val:.3e} violates strong subadditivity")
    return max(val, 0.0)


# ----------------------------------------------------------------------------
# vectorization (column stacking) and superoperator tooling
# ----------------------------------------------------------------------------

def vec(m) -> np.ndarray:
    """Column-stacking vectorization; <vec(A), vec(B)> = Tr(A^dag B)."""
    return _as_array(m).reshape(-1, order="F")


def unvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    d = int(round(len(v) ** 0.5))
    if d * d != len(v):
        raise ValueError("vector length is not a perfect square")
    return v.reshape((d, d), order="F")


def superoperator_of(apply_fn, dim: int) -> np.ndarray:
    """Materialize the matrix of a linear map on vectorized operators."""
    s = np.zeros((dim * dim, dim * dim), dtype=complex)
    basis = np.eye(dim * dim)
    for j in range(dim * dim):
        s[:, j] = vec(apply_fn(unvec(basis[:, j])))
    return s


def choi_of_superoperator(s: np.ndarray) -> np.ndarray:
    """Choi matrix sum_ij E(|i><j|) (x) |i><j| from a column-stacking superoperator."""
    d2 = s.shape[0]
    d = int(round(d2 ** 0.5))
    j = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[a, b] = 1.0
            out = unvec(s @ vec(e))
            j += np.kron(out, e)
    return j


def is_completely_positive(s: np.ndarray, atol: float = 1e-8) -> bool:
    ev = np.linalg.eigvalsh(_hermitize(choi_of_superoperator(s)))
    return bool(ev.min() >= -atol)


def is_trace_preserving(s: np.ndarray, atol: float = 1e-8) -> bool:
    d = int(round(s.shape[0] ** 0.5))
    lhs = s.conj().T @ vec(np.eye(d))
    return bool(np.abs(unvec(lhs) - np.eye(d)).max() <= atol)


# ----------------------------------------------------------------------------
# channel gates
# ----------------------------------------------------------------------------

class ChannelGate:
    """Base class for channel gates with a declared spatial support.

    Subclasses implement `apply_local` / `apply_local_adjoint` acting on a
    state given on `operand_labels` that contains the gate support; sites
    outside the support are carried as spectators.
    """

    support: tuple
    kind: str = "custom"

    def apply_local(self, matrix: np.ndarray, operand_labels) -> np.ndarray:
        raise NotImplementedError

    def apply_local_adjoint(self, matrix: np.ndarray, operand_labels) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter_hint(self):
        return None

    def superoperator(self, max_sites: int = 5) -> np.ndarray:
        if len(self.support) > max_sites:
            raise ResourceLimitError(
                f"support of {len(self.support)} sites exceeds the cap of {max_sites}")
        dim = 2 ** len(self.support)
        return superoperator_of(lambda m: self.apply_local(m, self.support), dim)

    def certify(self, atol: float = 1e-8, max_sites: int = 5) -> None:
        s = self.superoperator(max_sites=max_sites)
        if not is_completely_positive(s, atol=atol):
            raise NumericalIntegrityError(f"gate {self.kind} is not CP within {atol}")
        if not is_trace_preserving(s, atol=atol):
            raise NumericalIntegrityError(f"gate {self.kind} is not TP within {atol}")


@dataclass
class SuperopGate(ChannelGate):
    """Gate given by an explicit superoperator on its support."""

    smatrix: np.ndarray = None
    support: tuple = ()
    kind: str = "custom"

    def __post_init__(self):
        self.support = _check_labels(self.support)
        self.smatrix = np.asarray(self.smatrix, dtype=complex)
        d = 2 ** len(self.support)
        if self.smatrix.shape != (d * d, d * d):
            raise ValueError("superoperator shape does not match the support")

    def _apply(self, matrix, operand_labels, smat):
        operand_labels = _check_labels(operand_labels)
        if not set(self.support) <= set(operand_labels):
            raise LabelError("gate support not within the operand labels")
        sup = [s for s in operand_labels if s in set(self.support)]
        spec = [s for s in operand_labels if s not in set(self.support)]
        n = len(operand_labels)
        pos = [operand_labels.index(s) for s in sup] + \
              [operand_labels.index(s) for s in spec]
        t = _as_array(matrix).reshape((2,) * (2 * n))
        t = t.transpose(pos + [n + p for p in pos])
        ds, dsp = 2 ** len(sup), 2 ** len(spec)
        t = t.reshape(ds, dsp, ds, dsp)
        # vectorize the support factor: columns stack (row, col) -> ds*ds
        blk = t.transpose(0, 2, 1, 3).reshape(ds * ds, dsp * dsp, order="F")
        out = smat @ blk
        t = out.reshape(ds, ds, dsp, dsp, order="F").transpose(0, 2, 1, 3)
        t = t.reshape((2,) * (2 * n))
        inv = np.argsort(pos)
        t = t.transpose(list(inv) + [n + i for i in inv])
        d = 2 ** n
        # reorder self.support into operand order happened above via `sup`
        return np.ascontiguousarray(t.reshape(d, d))

    def apply_local(self, matrix, operand_labels):
        smat = self.smatrix
        sup = [s for s in _check_labels(operand_labels) if s in set(self.support)]
        if tuple(sup) != self.support:
            smat = _permute_superop(self.smatrix, self.support, tuple(sup))
        return self._apply(matrix, operand_labels, smat)

    def apply_local_adjoint(self, matrix, operand_labels):
        smat = self.smatrix
        sup = [s for s in _check_labels(operand_labels) if s in set(self.support)]
        if tuple(sup) != self.support:
            smat = _permute_superop(self.smatrix, self.support, tuple(sup))
        return self._apply(matrix, operand_labels, smat.conj().T)

    def superoperator(self, max_sites: int = 5) -> np.ndarray:
        return self.smatrix


def _permute_superop(s, old_labels, new_labels):
    # basis permutation between two orderings of the same label set
    d = 2 ** len(old_labels)
    n = len(old_labels)
    src = list(old_labels)
    perm = [src.index(s_) for s_ in new_labels]
    idx = np.arange(d)
    bits = ((idx[:, None] >> (n - 1 - np.arange(n))) & 1)
    new_idx = np.zeros(d, dtype=int)
    for j, p in enumerate(perm):
        new_idx |= bits[:, p] << (n - 1 - j)
    p_mat = np.zeros((d, d))
    p_mat[new_idx, idx] = 1.0
    big = np.kron(p_mat, p_mat)  # column stacking: vec(P m P^T) = (P (x) P) vec(m)
    return big @ s @ big.T


def apply_gate(state: DenseState, gate: ChannelGate,
               atol: float = CHANNEL_ATOL) -> DenseState:
    """Apply a gate to a state (identity on labels outside the support) and
    re-certify the output as a state."""
    out = gate.apply_local(state.matrix, state.labels)
    try:
        return DenseState(out, state.labels, atol=atol)
    except NumericalIntegrityError as exc:
        raise NumericalIntegrityError(
            f"output of gate {gate.kind} failed state certification: {exc}") from exc


def identity_gate(support) -> SuperopGate:
    d = 2 ** len(tuple(support))
    return SuperopGate(smatrix=np.eye(d * d, dtype=complex), support=tuple(support),
                       kind="identity")


def depolarizing_gate(support) -> SuperopGate:
    """Complete depolarizer: replaces the support marginal by the maximally
    mixed state."""
    support = tuple(support)
    d = 2 ** len(support)
    s = np.outer(vec(np.eye(d) / d), vec(np.eye(d)).conj())
    return SuperopGate(smatrix=s, support=support, kind="depolarize")


def reset_gate(site, target=0) -> SuperopGate:
    v = np.zeros(2, dtype=complex)
    v[target] = 1.0
    k0 = v[:, None] @ np.array([[1, 0]], complex)
    k1 = v[:, None] @ np.array([[0, 1]], complex)
    s = sum(np.kron(k.conj(), k) for k in (k0, k1))
    return SuperopGate(smatrix=s, support=(site,), kind="reset")


def induced_trace_norm_lb(apply_fn, dim: int, adjoint_fn=None, restarts: int = 6,
                          iters: int = 25, rng=None) -> float:
    """Certified lower bound on the 1->1 norm of a Hermiticity-preserving map.

    Alternating ascent over pure-state inputs: for the current witness sign
    operator P, the next input is the top eigenvector of the adjoint image of
    P. Each step is monotone, so the best value found is a valid lower bound.
    """
    rng = np.random.default_rng(rng)
    if adjoint_fn is None:
        s = superoperator_of(apply_fn, dim)
        adjoint_fn = lambda m: unvec(s.conj().T @ vec(m))
    best = 0.0
    for _ in range(restarts):
        g = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        psi = g / np.linalg.norm(g)
        prev = -1.0
        for _ in range(iters):
            out = apply_fn(np.outer(psi, psi.conj()))
            ev, u = np.linalg.eigh(_hermitize(out))
            val = float(np.abs(ev).sum())
            best = max(best, val)
            if val - prev < 1e-12:
                break
            prev = val
            p = (u * np.sign(ev)) @ u.conj().T
            grad = _hermitize(adjoint_fn(p))
            gv, gu = np.linalg.eigh(grad)
            psi = gu[:, -1]
    return best


def random_density_matrix(n_sites: int, rng=None, rank: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    d = 2 ** n_sites
    r = rank or d
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_hermitian(dim: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return _hermitize(g)


# ----------------------------------------------------------------------------
# operator serialization: one JSON header line, then row-major little-endian
# float64 (re, im) pairs
# ----------------------------------------------------------------------------

_MAGIC = b"GLABOP1\n"


def save_operator(path, matrix, labels) -> None:
    m = _as_array(matrix)
    labels = _check_labels(labels)
    header = json.dumps({"labels": list(labels), "dim": m.shape[0]},
                        sort_keys=True).encode() + b"\n"
    body = bytearray()
    flat = np.ascontiguousarray(m).ravel()
    body += struct.pack(f"<{2 * len(flat)}d",
                        *np.column_stack([flat.real, flat.imag]).ravel())
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(bytes(body))


def load_operator(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not an operator file")
        header = json.loads(fh.readline().decode())
        d = header["dim"]
        raw = fh.read(16 * d * d)
    vals = np.array(struct.unpack(f"<{2 * d * d}d", raw))
    m = (vals[0::2] + 1j * vals[1::2]).reshape(d, d)
    return m, tuple(header["labels"])
