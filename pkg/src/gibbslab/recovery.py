"""Reference-state resampling maps: erase a region, rebuild it from a buffer.

The realized channel is a weighted mixture of imaginary-time-rotated
rebuild maps; with a single node at t = 0 it reduces to the plain map.
All weights come from the kernel density b0(t) = (pi/2) / (cosh(pi t) + 1).
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .qcore import (
    ChannelGate,
    DenseState,
    LabelError,
    embed_operator,
    partial_trace,
)

__all__ = [
    "beta0",
    "QuadratureSpec",
    "DEFAULT_QUADRATURE",
    "PetzResampleGate",
    "RecoveryMap",
    "petz_recovery",
    "twirled_recovery",
    "ConditioningWarning",
]


class ConditioningWarning(UserWarning):
    """The reference marginal is close to singular; pseudo-inverse active."""


def beta0(t):
    """Even, positive weight density with unit integral and b0(0) = pi/4."""
    t = np.asarray(t, dtype=float)
    return 0.5 * np.pi / (np.cosh(np.pi * t) + 1.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Trapezoid rule for the rotation-weight integral on [-window, window].

    Weights are renormalized to total exactly 1, which restores trace
    preservation lost to truncating the tails.
    """

    window: float = 12.0
    n_nodes: int = 241

    def nodes_weights(self):
        if self.n_nodes == 1:
            return np.array([0.0]), np.array([1.0])
        t = np.linspace(-self.window, self.window, self.n_nodes)
        w = beta0(t) * (t[1] - t[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return t, w / w.sum()

    def truncation_mass(self) -> float:
        """Total b0 weight outside the window (doubled for both tails)."""
        return float(1.0 - np.tanh(0.5 * np.pi * self.window))

    def raw_mass(self) -> float:
        t, _ = self.nodes_weights()
        if self.n_nodes == 1:
            return 1.0
        w = beta0(t) * (t[1] - t[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return float(w.sum())

    @staticmethod
    def single_node(t: float = 0.0) -> "QuadratureSpec":
        return _SingleNode(t)


@dataclass(frozen=True)
class _SingleNode(QuadratureSpec):
    t0: float = 0.0

    def __init__(self, t0=0.0):
        object.__setattr__(self, "window", abs(t0))
        object.__setattr__(self, "n_nodes", 1)
        object.__setattr__(self, "t0", float(t0))

    def nodes_weights(self):
        return np.array([self.t0]), np.array([1.0])


DEFAULT_QUADRATURE = QuadratureSpec()


def _tensor_on_labels(m1, labels1, m2, labels2, target_labels):
    """kron of two factors, reordered to target label order."""
    big = np.kron(np.asarray(m1, complex), np.asarray(m2, complex))
    src = list(labels1) + list(labels2)
    n = len(src)
    perm = [src.index(s) for s in target_labels]
    t = big.reshape((2,) * (2 * n))
    t = t.transpose(perm + [n + p for p in perm])
    d = 2 ** n
    return np.ascontiguousarray(t.reshape(d, d))


def _sub_index(labels_subset, labels_all):
    """For every basis index of the `labels_all` space, the basis index of
    the `labels_subset` factor (subset order)."""
    n = len(labels_all)
    d = 2 ** n
    idx = np.arange(d)
    out = np.zeros(d, dtype=np.int64)
    for j, s in enumerate(labels_subset):
        pos = labels_all.index(s)
        bit = (idx >> (n - 1 - pos)) & 1
        out |= bit << (len(labels_subset) - 1 - j)
    return out


class PetzResampleGate(ChannelGate):
    """Channel on `support` that erases `erase_sites` and resamples them from
    the rest of the support, conditioned on a fixed reference marginal.

    Diagonal references use a precomputed Schur kernel (one elementwise
    multiply per application); general references loop over quadrature nodes.
    """

    def __init__(self, reference_marginal: np.ndarray, support, erase_sites,
                 quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
                 pinv_threshold: float = 1e-12, kind: str = "recovery",
                 force_node_path: bool = False):
        self.support = tuple(sorted(support))
        self.erase_sites = tuple(sorted(erase_sites))
        if not set(self.erase_sites) <= set(self.support):
            raise LabelError("erase sites must lie within the support")
        self.keep_sites = tuple(s for s in self.support
                                if s not in set(self.erase_sites))
        self.kind = kind
        self.quadrature = quadrature
        self.pinv_threshold = pinv_threshold

        sigma = np.asarray(reference_marginal, dtype=complex)
        if sigma.shape[0] != 2 ** len(self.support):
            raise ValueError("reference dimension does not match the support")
        self.reference = 0.5 * (sigma + sigma.conj().T)
        off = self.reference - np.diag(np.diag(self.reference))
        self._diagonal = bool(np.abs(off).max() < 1e-13) if off.size else True
        if force_node_path:
            self._diagonal = False
        if self._diagonal:
            self._kernel = self._build_kernel()
            self.conditioning_warning = bool((~self._kernel_mu_ok).any())
        else:
            sig_keep = partial_trace(self.reference, self.support,
                                     self.keep_sites)
            lam, u = np.linalg.eigh(self.reference)
            mu, v = np.linalg.eigh(0.5 * (sig_keep + sig_keep.conj().T))
            lam = np.clip(lam, 0.0, None)
            mu = np.clip(mu, 0.0, None)
            self._lam, self._u = lam, u
            self._mu, self._v = mu, v
            cut = pinv_threshold * max(mu.max(), 1e-300)
            self._mu_ok = mu > cut
            self.conditioning_warning = bool((~self._mu_ok).any()) and len(mu) > 0
            safe_mu = np.where(self._mu_ok, mu, 1.0)
            self._inv_sqrt_mu = np.where(self._mu_ok, safe_mu ** -0.5, 0.0)
            self._ln_mu = np.where(self._mu_ok, np.log(safe_mu), 0.0)
            lam_cut = pinv_threshold * max(lam.max(), 1e-300)
            safe_lam = np.where(lam > lam_cut, lam, 1.0)
            self._sqrt_lam = np.sqrt(lam)
            self._ln_lam = np.where(lam > lam_cut, np.log(safe_lam), 0.0)
            self._kernel = None
        if self.conditioning_warning:
            warnings.warn("reference marginal is numerically singular; "
                          "pseudo-inverse convention active", ConditioningWarning)
        self._cache = {}

    # -- kernel path (diagonal reference) ------------------------------------
    def _build_kernel(self):
        ts, ws = self.quadrature.nodes_weights()
        d_s = 2 ** len(self.support)
        lam = np.real(np.diag(self.reference)).clip(0.0)
        keep_of = _sub_index(self.keep_sites, self.support)
        mu = np.zeros(2 ** len(self.keep_sites))
        np.add.at(mu, keep_of, lam)
        cut = self.pinv_threshold * max(mu.max(), 1e-300)
        ok = mu > cut
        safe = np.where(ok, mu, 1.0)
        inv_sqrt_mu = np.where(ok, safe ** -0.5, 0.0)
        ln_mu = np.where(ok, np.log(safe), 0.0)
        lam_cut = self.pinv_threshold * max(lam.max(), 1e-300)
        ln_lam = np.where(lam > lam_cut, np.log(np.where(lam > lam_cut, lam, 1.0)), 0.0)
        u = (np.sqrt(lam)[:, None] * inv_sqrt_mu[keep_of][:, None]
             * np.exp(1j * np.outer(ln_mu[keep_of] - ln_lam, ts)))
        self._kernel_mu_ok = ok
        self._kernel_keep_of = keep_of
        return (u * ws) @ u.conj().T

    def _maps(self, operand_labels):
        operand_labels = tuple(operand_labels)
        cached = self._cache.get(operand_labels)
        if cached is None:
            if not set(self.support) <= set(operand_labels):
                raise LabelError("gate support not within the operand labels")
            keepglob = tuple(s for s in operand_labels
                             if s not in set(self.erase_sites))
            sup_idx = _sub_index(self.support, operand_labels)
            keep_in_x = _sub_index(self.keep_sites, keepglob)
            cached = (keepglob, sup_idx, keep_in_x)
            self._cache[operand_labels] = cached
        return cached

    # -- application ----------------------------------------------------------
    def apply_local(self, matrix, operand_labels):
        operand_labels = tuple(operand_labels)
        keepglob, sup_idx, keep_in_x = self._maps(operand_labels)
        x = partial_trace(matrix, operand_labels, keepglob) if self.erase_sites \
            else np.asarray(matrix, complex)
        if self._diagonal:
            embx = embed_operator(x, keepglob, operand_labels)
            mask = self._kernel[sup_idx][:, sup_idx]
            out = mask * embx
            deficit = self._keep_deficit(x, keepglob, keep_in_x)
        else:
            out, deficit = self._apply_nodes(x, keepglob, operand_labels,
                                             sup_idx, keep_in_x)
        if deficit is not None:
            out = out + deficit_to_completion(self.reference, self.support,
                                              deficit, operand_labels)
        return out

    def _keep_deficit(self, x, keepglob, keep_in_x):
        if self._diagonal:
            ok = self._kernel_mu_ok
        else:
            ok = self._mu_ok
        if ok.all():
            return None
        # weight of x living outside the reference-marginal support
        proj_bad = ~ok
        if self._diagonal:
            bad = proj_bad[keep_in_x]
            spec = [s for s in keepglob if s not in set(self.keep_sites)]
            xbad = x * np.outer(bad, bad)
            return partial_trace(xbad, keepglob, spec) if spec else \
                np.array([[np.trace(xbad)]])
        v_bad = self._v[:, proj_bad]
        p_bad = v_bad @ v_bad.conj().T
        pfull = embed_operator(p_bad, self.keep_sites, keepglob)
        xbad = pfull @ x @ pfull
        spec = [s for s in keepglob if s not in set(self.keep_sites)]
        return partial_trace(xbad, keepglob, spec) if spec else \
            np.array([[np.trace(xbad)]])

    def _apply_nodes(self, x, keepglob, operand_labels, sup_idx, keep_in_x):
        ts, ws = self.quadrature.nodes_weights()
        vfull = embed_operator(self._v, self.keep_sites, keepglob) \
            if self.keep_sites else None
        xp = vfull.conj().T @ x @ vfull if vfull is not None else x
        ufull = embed_operator(self._u, self.support, operand_labels)
        d = 2 ** len(operand_labels)
        acc = np.zeros((d, d), dtype=complex)
        phase_keep = self._ln_mu[keep_in_x] if self.keep_sites else None
        mag_keep = self._inv_sqrt_mu[keep_in_x] if self.keep_sites else None
        lam_idx = sup_idx
        sqrt_l = self._sqrt_lam[lam_idx]
        ln_l = self._ln_lam[lam_idx]
        for t, w in zip(ts, ws):
            if self.keep_sites:
                g = mag_keep * np.exp(1j * t * phase_keep)
                inner = (g[:, None] * xp) * g.conj()[None, :]
                inner = vfull @ inner @ vfull.conj().T
            else:
                inner = x
            big = embed_operator(inner, keepglob, operand_labels)
            bp = ufull.conj().T @ big @ ufull
            l = sqrt_l * np.exp(-1j * t * ln_l)
            acc += w * ((l[:, None] * bp) * l.conj()[None, :])
        out = ufull @ acc @ ufull.conj().T
        return out, self._keep_deficit(x, keepglob, keep_in_x)

    def apply_local_adjoint(self, matrix, operand_labels):
        operand_labels = tuple(operand_labels)
        keepglob, sup_idx, keep_in_x = self._maps(operand_labels)
        y = np.asarray(matrix, complex)
        if self._diagonal:
            mask = self._kernel[sup_idx][:, sup_idx]
            masked = mask.conj() * y
            core = partial_trace(masked, operand_labels, keepglob)
        else:
            ts, ws = self.quadrature.nodes_weights()
            ufull = embed_operator(self._u, self.support, operand_labels)
            yp = ufull.conj().T @ y @ ufull
            vfull = embed_operator(self._v, self.keep_sites, keepglob) \
                if self.keep_sites else None
            dk = 2 ** len(keepglob)
            core_p = np.zeros((dk, dk), dtype=complex)
            sqrt_l = self._sqrt_lam[sup_idx]
            ln_l = self._ln_lam[sup_idx]
            for t, w in zip(ts, ws):
                l = sqrt_l * np.exp(-1j * t * ln_l)
                mid = (l.conj()[:, None] * yp) * l[None, :]
                mid = ufull @ mid @ ufull.conj().T
                small = partial_trace(mid, operand_labels, keepglob)
                if self.keep_sites:
                    g = self._inv_sqrt_mu[keep_in_x] * \
                        np.exp(1j * t * self._ln_mu[keep_in_x])
                    small_p = vfull.conj().T @ small @ vfull
                    core_p += w * ((g.conj()[:, None] * small_p) * g[None, :])
                else:
                    core_p += w * small
            core = vfull @ core_p @ vfull.conj().T if vfull is not None else core_p
        if not self._mu_ok_all():
            raise NotImplementedError(
                "adjoint with an active pseudo-inverse completion is unsupported")
        return embed_operator(core, keepglob, operand_labels)

    def _mu_ok_all(self):
        ok = self._kernel_mu_ok if self._diagonal else self._mu_ok
        return bool(ok.all()) if ok.size else True

    @property
    def diameter_hint(self):
        return None

    def reference_hash(self) -> str:
        return hashlib.sha256(
            np.round(self.reference, 12).tobytes()).hexdigest()[:16]


def deficit_to_completion(reference, support, deficit_on_spectators,
                          operand_labels):
    """Route trace weight outside the reference-marginal support back into the
    reference state, preserving complete positivity and the trace."""
    spec = [s for s in operand_labels if s not in set(support)]
    if spec:
        return _tensor_on_labels(reference, support, deficit_on_spectators,
                                 spec, operand_labels)
    return reference * complex(deficit_on_spectators[0, 0])


@dataclass
class RecoveryMap:
    """A realized resampling gate plus its construction metadata."""

    gate: PetzResampleGate
    reference_labels: tuple
    erase_labels: tuple
    quadrature: QuadratureSpec
    conditioning_warning: bool = False

    @property
    def support(self):
        return self.gate.support

    def apply(self, state: DenseState, atol: float = 1e-7) -> DenseState:
        from .qcore import apply_gate
        return apply_gate(state, self.gate, atol=atol)

    def serialize(self) -> dict:
        return {
            "reference_hash": self.gate.reference_hash(),
            "reference_labels": list(self.reference_labels),
            "erase_labels": list(self.erase_labels),
            "quadrature": {"window": self.quadrature.window,
                           "n_nodes": self.quadrature.n_nodes},
            "truncation_mass": self.quadrature.truncation_mass(),
            "conditioning_warning": self.conditioning_warning,
        }


def _marginal(reference: DenseState, support):
    support = tuple(sorted(support))
    if tuple(reference.labels) == support:
        return reference.matrix
    return partial_trace(reference.matrix, reference.labels, support)


def petz_recovery(reference: DenseState, support, erase_labels,
                  t: float = 0.0, pinv_threshold: float = 1e-12) -> RecoveryMap:
    """Single-rotation rebuild map (t = 0 gives the plain map)."""
    quad = QuadratureSpec.single_node(t)
    gate = PetzResampleGate(_marginal(reference, support), support,
                            erase_labels, quadrature=quad,
                            pinv_threshold=pinv_threshold)
    return RecoveryMap(gate, tuple(sorted(support)), tuple(sorted(erase_labels)),
                       quad, gate.conditioning_warning)


def twirled_recovery(reference: DenseState, support, erase_labels,
                     quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
                     pinv_threshold: float = 1e-12) -> RecoveryMap:
    """Weight-averaged rotated rebuild map at the given quadrature."""
    gate = PetzResampleGate(_marginal(reference, support), support,
                            erase_labels, quadrature=quadrature,
                            pinv_threshold=pinv_threshold)
    return RecoveryMap(gate, tuple(sorted(support)), tuple(sorted(erase_labels)),
                       quadrature, gate.conditioning_warning)
