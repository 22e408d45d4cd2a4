"""Spectral-filter response operator and locality-of-response checks.

The filter acts in the Hamiltonian eigenbasis as a Schur multiplier
f(Ej - Ek) with f(w) = tanh(w/2) / (w/2). This choice makes the operator
satisfy the flow identity

    d/ds exp(-H(s)) + (1/2) {Phi_s(dH/ds), exp(-H(s))} = 0

exactly, which anchors every check in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

from .correlations import covariance
from .model import InteractionFamily, local_algebra
from .qcore import DenseState, embed_operator, partial_trace, trace_norm

__all__ = [
    "QbpFilter",
    "belief_propagation_operator",
    "response_identity_check",
    "response_bound_check",
    "localize_operator",
    "default_lr_velocity",
]


@dataclass(frozen=True)
class QbpFilter:
    """Even spectral window with value 1 at zero frequency and |f| <= 1."""

    tag: str = "tanh-ratio"

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        half = 0.5 * omega
        small = np.abs(half) < 1e-12
        safe = np.where(small, 1.0, half)
        return np.where(small, 1.0, np.tanh(safe) / safe)


DEFAULT_FILTER = QbpFilter()


def belief_propagation_operator(h, v, filt: QbpFilter = DEFAULT_FILTER):
    """Apply the spectral filter to `v` in the eigenbasis of Hermitian `h`."""
    h = np.asarray(h, dtype=complex)
    if np.abs(h - h.conj().T).max() > 1e-9:
        raise ValueError("Hamiltonian must be Hermitian")
    ev, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    vp = u.conj().T @ np.asarray(v, complex) @ u
    weights = filt(ev[:, None] - ev[None, :])
    return u @ (vp * weights) @ u.conj().T


def flow_identity_residual(h_fn, s: float, filt: QbpFilter = DEFAULT_FILTER,
                           fd_step: float = 1e-4) -> float:
    """Max-entry residual of d/ds exp(-H) + (1/2){Phi(dH), exp(-H)} with a
    central finite difference for the s-derivative."""
    hm = h_fn(s - fd_step)
    hp = h_fn(s + fd_step)
    dexp = (expm(-hp) - expm(-hm)) / (2 * fd_step)
    dh = (hp - hm) / (2 * fd_step)
    h0 = h_fn(s)
    phi = belief_propagation_operator(h0, dh, filt)
    e = expm(-h0)
    return float(np.abs(dexp + 0.5 * (phi @ e + e @ phi)).max())


def _gibbs_of(h):
    ev, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    w = np.exp(-(ev - ev.min()))
    w /= w.sum()
    return (u * w) @ u.conj().T


def _pair_cov(rho, a, b):
    return np.trace(rho @ a @ b) - np.trace(rho @ a) * np.trace(rho @ b)


@dataclass
class ResponseIdentityReport:
    lhs: float
    rhs: float
    residual: float
    converged: bool
    n_nodes: int


def response_identity_check(h0, v, observable, n_nodes: int = 64,
                            filt: QbpFilter = DEFAULT_FILTER
                            ) -> ResponseIdentityReport:
    """Both sides of the exact response identity for H(s) = H0 + s V:

        Tr[(rho(0) - rho(1)) O]
            = (1/2) Int_0^1 ds [Cov_s(Phi_s(V), O) + Cov_s(O, Phi_s(V))]

    evaluated with Gauss-Legendre quadrature. Doubling the node count must
    move the quadrature by less than 1e-4 or the result is flagged.
    """
    h0 = np.asarray(h0, complex)
    v = np.asarray(v, complex)
    obs = np.asarray(observable, complex)
    lhs = complex(np.trace((_gibbs_of(h0) - _gibbs_of(h0 + v)) @ obs))

    def quad(n):
        xs, ws = leggauss(n)
        total = 0.0 + 0.0j
        for x, w in zip(0.5 * (xs + 1.0), 0.5 * ws):
            h = h0 + x * v
            rho = _gibbs_of(h)
            phi = belief_propagation_operator(h, v, filt)
            total += w * 0.5 * (_pair_cov(rho, phi, obs) + _pair_cov(rho, obs, phi))
        return total

    rhs = quad(n_nodes)
    rhs2 = quad(2 * n_nodes)
    converged = abs(rhs2 - rhs) <= 1e-4
    return ResponseIdentityReport(float(np.real(lhs)), float(np.real(rhs)),
                                  float(abs(lhs - rhs)), converged, n_nodes)


def localize_operator(op, op_labels, all_labels, region_labels):
    """Normalized-partial-trace localization onto `region_labels`: trace out
    the exterior, divide by its dimension, re-extend with identity."""
    full = embed_operator(op, tuple(op_labels), tuple(all_labels))
    keep = tuple(s for s in all_labels if s in set(region_labels))
    small = partial_trace(full, tuple(all_labels), keep)
    small = small / (2 ** (len(all_labels) - len(keep)))
    return embed_operator(small, keep, tuple(all_labels))


def default_lr_velocity(family: InteractionFamily) -> float:
    """Crude information-speed estimate: 2 * max degree * range * max norm."""
    n = family.n_sites
    degree = np.zeros(n)
    for t in family.terms:
        for s in t.region.sites:
            degree[s] += 1
    r = max(family.interaction_range, 1)
    return float(2.0 * degree.max() * r)


@dataclass
class ResponseBoundReport:
    lhs: float
    rhs_lower_cov: float
    rhs_upper_cov: float
    velocity: float
    l_used: int
    separation: int


def response_bound_check(family: InteractionFamily, perturbation,
                         partition, l: int, velocity: float | None = None,
                         n_s_nodes: int = 8, rng=None) -> ResponseBoundReport:
    """Measured distant-marginal response against its covariance bound.

    perturbation: (op matrix, labels, strength) acting inside partition.a.
    LHS is the trace distance of the marginals on partition.c between the
    unperturbed and perturbed thermal states; the bound combines the
    supremum covariance of (dilated A, C) along the path with the
    light-cone truncation term 6 |A| exp(-l / (1 + v / pi)).
    """
    op, labels, strength = perturbation
    a, c = partition.a, partition.c
    if not set(labels) <= a.sites:
        raise ValueError("perturbation must act inside the inner region")
    if l >= partition.separation():
        raise ValueError("localization radius must stay below d(A, C)")
    v = velocity if velocity is not None else default_lr_velocity(family)
    rng = np.random.default_rng(rng)
    n = family.n_sites
    all_sites = tuple(range(n))
    vmat = strength * embed_operator(op, tuple(labels), all_sites)
    h0 = family.hamiltonian()

    cs = c.sorted_sites()
    rho0 = _gibbs_of(h0)
    rho1 = _gibbs_of(h0 + vmat)
    lhs = trace_norm(partial_trace(rho0, all_sites, cs)
                     - partial_trace(rho1, all_sites, cs))

    a_dil = a.dilate(l)
    cap_a = max(6, a_dil.size) if family.is_diagonal() else 6
    cap_c = max(6, c.size) if family.is_diagonal() else 6
    alg_a = local_algebra(family, a_dil, site_cap=cap_a, rng=rng)
    alg_c = local_algebra(family, c, site_cap=cap_c, rng=rng)
    lo = hi = 0.0
    for s in np.linspace(0.0, 1.0, n_s_nodes):
        st = DenseState(_gibbs_of(h0 + s * vmat), all_sites)
        est = covariance(st, a_dil, c, algebra_x=alg_a, algebra_y=alg_c,
                         rng=rng, restarts=4, iters=25)
        lo, hi = max(lo, est.lower), max(hi, est.upper)
    tail = 6.0 * a.size * np.exp(-l / (1.0 + v / np.pi))
    norm_v = float(np.linalg.norm(vmat, 2))
    return ResponseBoundReport(lhs, norm_v * (lo + tail), norm_v * (hi + tail),
                               v, l, partition.separation())
