"""Interaction-variation gates, layered circuits with reversals, and the
local-reversibility / local-indistinguishability audits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    BlockPartition,
    GeometryError,
    InteractionFamily,
    Region,
    block_partition,
    gibbs_state,
    ground_state_projector,
)
from .qcore import ChannelGate, DenseState, apply_gate, trace_distance
from .recovery import DEFAULT_QUADRATURE, PetzResampleGate, QuadratureSpec

__all__ = [
    "ShellGeometry",
    "LocalVariationResult",
    "local_variation_gate",
    "VariationStep",
    "ChannelCircuit",
    "GlobalCircuitResult",
    "global_variation_circuit",
    "LRAuditResult",
    "lr_audit",
    "LIAuditResult",
    "li_audit",
    "candidate_regions",
    "conjugated_candidates",
    "ground_space_scale",
    "CmiDecayConstants",
    "fit_cmi_decay_constants",
    "predicted_variation_error",
]


@dataclass(frozen=True)
class ShellGeometry:
    """Inner region, two buffer shells (clipped to the lattice), remainder."""

    inner: Region
    shell1: Region
    shell2: Region
    outer: Region
    r1: int
    r2: int

    @property
    def support(self) -> tuple:
        return tuple(sorted(self.inner.sites | self.shell1.sites
                            | self.shell2.sites))

    @property
    def erase(self) -> tuple:
        return tuple(sorted(self.inner.sites | self.shell1.sites))


def shell_geometry(region: Region, r1: int, r2: int) -> ShellGeometry:
    lat = region.lattice
    dist = {s: min(lat.distance(s, x) for x in region.sites)
            for s in range(lat.n_sites)}
    s1 = lat.region(s for s, d in dist.items() if 1 <= d <= r1)
    s2 = lat.region(s for s, d in dist.items() if r1 < d <= r1 + r2)
    outer = lat.region(s for s, d in dist.items() if d > r1 + r2)
    return ShellGeometry(region, s1, s2, outer, r1, r2)


@dataclass
class CmiDecayConstants:
    """Fitted exponents of the conditional-information decay surface
    log I <= kappa + mu * |inner| - separation / lam."""

    kappa: float
    mu: float
    lam: float


def fit_cmi_decay_constants(family: InteractionFamily, partitions) -> CmiDecayConstants:
    """Least-squares fit of log CMI against inner size and separation over the
    given annulus partitions (floor-clipped at 1e-14)."""
    from .qcore import cmi
    rho = gibbs_state(family)
    rows, ys = [], []
    for p in partitions:
        val = cmi(rho, p.a.sorted_sites(), p.b.sorted_sites(),
                  p.c.sorted_sites())
        rows.append([1.0, p.a.size, -float(p.separation())])
        ys.append(np.log(max(val, 1e-14)))
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(ys), rcond=None)
    kappa, mu, inv_lam = sol
    lam = 1.0 / max(inv_lam, 1e-6)
    return CmiDecayConstants(float(kappa), float(mu), float(lam))


def predicted_variation_error(constants: CmiDecayConstants, xi_prime: float,
                              erased_size: int, r1: int, r2: int,
                              prefactor: float = 1.0) -> float:
    """Two-exponential error shape with fitted constants: a conditional-
    information term in the outer shell width plus a response term in the
    inner shell width."""
    markov = np.exp(constants.kappa + constants.mu * erased_size
                    - r2 / constants.lam)
    response = np.exp(-r1 / max(xi_prime, 1e-9))
    return float(prefactor * (markov + response))


@dataclass
class LocalVariationResult:
    gate: PetzResampleGate
    reversal: PetzResampleGate
    geometry: ShellGeometry
    forward_error: float | None
    backward_error: float | None
    roundtrip_error: float | None
    predicted_error: float | None
    state_before_hash: str
    state_after_hash: str


def local_variation_gate(family: InteractionFamily, delta, region_a: Region,
                         r1: int, r2: int,
                         quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
                         measure: bool = True,
                         constants: CmiDecayConstants | None = None,
                         xi_prime: float = 1.0,
                         state_before: DenseState | None = None,
                         state_after: DenseState | None = None
                         ) -> LocalVariationResult:
    """Gate taking the thermal state of `family` to that of the perturbed
    couplings: erase the inner region and first shell, then resample them
    from the second shell conditioned on the perturbed state's marginal.

    The reversal gate is the same construction with the unperturbed state as
    reference. `delta` must vanish on terms not supported inside `region_a`.
    """
    delta = np.asarray(delta, dtype=float)
    inside = set(family.terms_supported_in(region_a))
    bad = [i for i in np.nonzero(delta)[0] if i not in inside]
    if bad:
        raise ValueError(f"perturbed terms {bad} are not inside the region")
    geom = shell_geometry(region_a, r1, r2)
    rho = state_before if state_before is not None else gibbs_state(family)
    rho_t = state_after if state_after is not None else \
        gibbs_state(family.perturbed(delta))
    support = geom.support
    erase = geom.erase
    from .qcore import partial_trace
    ref_after = partial_trace(rho_t.matrix, rho_t.labels, support) \
        if len(support) < len(rho_t.labels) else rho_t.matrix
    ref_before = partial_trace(rho.matrix, rho.labels, support) \
        if len(support) < len(rho.labels) else rho.matrix
    gate = PetzResampleGate(ref_after, support, erase, quadrature,
                            kind="variation")
    reversal = PetzResampleGate(ref_before, support, erase, quadrature,
                                kind="variation-reversal")
    fwd = bwd = rt = None
    if measure:
        out = gate.apply_local(rho.matrix, rho.labels)
        fwd = trace_distance(out, rho_t.matrix)
        back = reversal.apply_local(rho_t.matrix, rho_t.labels)
        bwd = trace_distance(back, rho.matrix)
        rt = trace_distance(reversal.apply_local(out, rho.labels), rho.matrix)
    pred = None
    if constants is not None:
        pred = predicted_variation_error(constants, xi_prime,
                                         len(erase), r1, r2)
    return LocalVariationResult(gate, reversal, geom, fwd, bwd, rt, pred,
                                _hash_state(rho), _hash_state(rho_t))


def _hash_state(state: DenseState) -> str:
    import hashlib
    return hashlib.sha256(np.round(state.matrix, 12).tobytes()).hexdigest()[:16]


@dataclass
class VariationStep:
    step: int
    block: int
    center: int
    delta: np.ndarray
    forward_error: float
    backward_error: float
    ref_before_hash: str
    ref_after_hash: str


@dataclass
class ChannelCircuit:
    """Layered gates with index-aligned reversal gates.

    Gates are stored in application order (layer-major); `layer_of[i]` gives
    the layer index of gate i. The range is the layer count times the largest
    gate support diameter.
    """

    gates: list
    reversals: list
    layer_of: list
    lattice: object
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for layer in self.layers():
            seen = set()
            for g in layer:
                if seen & set(g.support):
                    raise ValueError("gates within a layer must be disjoint")
                seen |= set(g.support)

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    @property
    def n_layers(self) -> int:
        return max(self.layer_of) + 1 if self.layer_of else 0

    def layers(self):
        out = [[] for _ in range(self.n_layers)]
        for g, l in zip(self.gates, self.layer_of):
            out[l].append(g)
        return out

    def max_gate_diameter(self) -> int:
        best = 0
        for g in self.gates:
            best = max(best, self.lattice.region(g.support).diameter)
        return best

    @property
    def range_(self) -> int:
        return self.n_layers * self.max_gate_diameter()

    def apply(self, state: DenseState, atol: float = 1e-6) -> DenseState:
        cur = state
        for g in self.gates:
            cur = apply_gate(cur, g, atol=atol)
        return cur

    def apply_reversal(self, state: DenseState, atol: float = 1e-6) -> DenseState:
        cur = state
        for g in reversed(self.reversals):
            cur = apply_gate(cur, g, atol=atol)
        return cur

    def serialize(self) -> dict:
        rows = []
        for i, (g, r) in enumerate(zip(self.gates, self.reversals)):
            rows.append({
                "index": i,
                "layer": self.layer_of[i],
                "support": list(g.support),
                "kind": g.kind,
                "reference_hash": g.reference_hash(),
                "reversal_reference_hash": r.reference_hash(),
                "quadrature": {"window": g.quadrature.window,
                               "n_nodes": g.quadrature.n_nodes},
            })
        return {"gates": rows, "n_layers": self.n_layers,
                "metadata": {k: v for k, v in self.metadata.items()
                             if isinstance(v, (int, float, str, list))}}


@dataclass
class GlobalCircuitResult:
    circuit: ChannelCircuit
    steps: list
    sum_local_errors: float
    measured_global_error: float | None
    telescope_ok: bool | None
    partition: BlockPartition


def _color_blocks(lattice, blocks, centers, halo: int):
    """Greedy coloring; blocks conflict when their haloed supports overlap."""
    supports = [b.dilate(halo).sites for b in blocks]
    order = sorted(range(len(blocks)), key=lambda i: lattice.site(centers[i]))
    colors = {}
    for i in order:
        used = {colors[j] for j in colors if supports[i] & supports[j]}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors, order


def global_variation_circuit(family: InteractionFamily, path, r_a: int,
                             r1: int, r2: int, delta_cap: float = 0.1,
                             quadrature: QuadratureSpec = DEFAULT_QUADRATURE,
                             measure: bool = True,
                             skip_identity_blocks: bool = True
                             ) -> GlobalCircuitResult:
    """Layered circuit driving the thermal state along a coupling path.

    Each path step is split across blocks; block gates are greedily colored
    into layers of disjoint-support gates piloted in lexicographic center
    order. Intermediate references are exact thermal states recomputed from
    the couplings, never propagated through gates.
    """
    path = [np.asarray(p, dtype=float) for p in path]
    if len(path) < 1:
        raise ValueError("path must contain at least the starting couplings")
    for m in range(1, len(path)):
        step = np.abs(path[m] - path[m - 1]).max()
        if step > delta_cap + 1e-12:
            need = int(np.ceil(np.abs(path[-1] - path[0]).max() / delta_cap))
            raise GeometryError(
                f"path step {m} has size {step:.4g} > {delta_cap}; "
                f"discretize into at least {need} steps")
    lat = family.lattice
    part = block_partition(lat, family, r_a)
    colors, order = _color_blocks(lat, list(part.blocks), list(part.centers),
                                  r1 + r2)
    n_colors = max(colors.values()) + 1 if colors else 0
    ordered_blocks = sorted(range(len(part.blocks)),
                            key=lambda i: (colors[i], lat.site(part.centers[i])))

    gates, reversals, layer_of, steps = [], [], [], []
    running = path[0].copy()
    layer_base = 0
    for m in range(1, len(path)):
        delta_step = path[m] - path[m - 1]
        used_colors = set()
        for bi in ordered_blocks:
            mask = part.block_couplings(family, bi)
            delta_b = delta_step * mask
            if skip_identity_blocks and not np.abs(delta_b).any():
                continue
            fam_before = family.with_couplings(running)
            res = local_variation_gate(
                fam_before, delta_b, part.blocks[bi], r1, r2,
                quadrature=quadrature, measure=measure)
            running = running + delta_b
            gates.append(res.gate)
            reversals.append(res.reversal)
            layer_of.append(layer_base + colors[bi])
            used_colors.add(colors[bi])
            steps.append(VariationStep(
                m - 1, bi, part.centers[bi], delta_b,
                res.forward_error if measure else np.nan,
                res.backward_error if measure else np.nan,
                res.state_before_hash, res.state_after_hash))
        layer_base += n_colors
    # compress empty layers
    present = sorted(set(layer_of))
    remap = {l: i for i, l in enumerate(present)}
    layer_of = [remap[l] for l in layer_of]
    circuit = ChannelCircuit(gates, reversals, layer_of, lat, metadata={
        "path": [list(map(float, p)) for p in path],
        "radii": [r_a, r1, r2],
        "delta_cap": delta_cap,
    })
    total = float(np.nansum([s.forward_error for s in steps])) if steps else 0.0
    measured = None
    telescope = None
    if measure:
        rho0 = gibbs_state(family.with_couplings(path[0]))
        rho1 = gibbs_state(family.with_couplings(path[-1]))
        out = circuit.apply(rho0)
        measured = trace_distance(out.matrix, rho1.matrix)
        telescope = measured <= total + len(gates) * 1e-9 + 1e-12
    return GlobalCircuitResult(circuit, steps, total, measured, telescope, part)


# ----------------------------------------------------------------------------
# audits
# ----------------------------------------------------------------------------

@dataclass
class LRAuditResult:
    eps_lr: float
    per_gate: list                 # (gate index, layer, residual)
    roundtrip_error: float
    n_gates: int

    @property
    def reversal_bound(self) -> float:
        return self.n_gates * self.eps_lr


def lr_audit(circuit: ChannelCircuit, state: DenseState,
             atol: float = 1e-6) -> LRAuditResult:
    """Per-gate reversal residuals on the replayed state.

    Each gate's residual is measured at its layer boundary: apply the gate to
    the state after all previous layers, then its reversal, and compare. The
    full reversal error is measured by replaying the complete reversal
    circuit on the final state.
    """
    rows = []
    cur = state
    by_layer = [[] for _ in range(circuit.n_layers)]
    for i, l in enumerate(circuit.layer_of):
        by_layer[l].append(i)
    for li, members in enumerate(by_layer):
        layer_start = cur
        for i in members:
            g, rev = circuit.gates[i], circuit.reversals[i]
            after = apply_gate(layer_start, g, atol=atol)
            resid = trace_distance(apply_gate(after, rev, atol=atol).matrix,
                                   layer_start.matrix)
            rows.append((i, li, float(resid)))
        for i in members:
            cur = apply_gate(cur, circuit.gates[i], atol=atol)
    final = cur
    back = circuit.apply_reversal(final, atol=atol)
    roundtrip = trace_distance(back.matrix, state.matrix)
    eps = max((r for _, _, r in rows), default=0.0)
    return LRAuditResult(eps, rows, roundtrip, circuit.n_gates)


def candidate_regions(lattice, max_diameter: int, max_size: int | None = None):
    """Connected proper subsets with diameter at most `max_diameter`."""
    n = lattice.n_sites
    cap = max_size if max_size is not None else n - 1
    step = lattice.adjacency_scale
    found = set()
    frontier = {frozenset([s]) for s in range(n)}
    while frontier:
        nxt = set()
        for reg in frontier:
            r = lattice.region(reg)
            if r.diameter <= max_diameter and len(reg) < n:
                if reg not in found:
                    found.add(reg)
                    if len(reg) < cap:
                        for s in range(n):
                            if s not in reg and min(
                                    lattice.distance(s, t) for t in reg) <= step:
                                nxt.add(reg | {s})
        frontier = nxt
    return [lattice.region(f) for f in sorted(found, key=lambda f: (len(f), sorted(f)))]


@dataclass
class LIAuditResult:
    eps_li: float | None
    per_region: list               # (sites, best error, candidate index)
    inconclusive: bool
    witness_regions: list


def li_audit(rho: DenseState, sigma: DenseState, lattice, max_diameter: int,
             candidates, atol: float = 1e-6,
             max_region_size: int | None = None) -> LIAuditResult:
    """Upper-bound audit of local indistinguishability.

    candidates: list of (channel_rho_to_sigma, channel_sigma_to_rho, support)
    where channels are either ChannelGates or callables on DenseState. For
    each connected test region the best candidate pair acting outside it is
    scored; regions with no valid candidate make the audit inconclusive
    rather than refuting anything.
    """
    regions = candidate_regions(lattice, max_diameter, max_region_size)
    rows, eps, inconclusive = [], 0.0, False
    witnesses = []
    for reg in regions:
        best = None
        best_idx = None
        for ci, (d_rs, d_sr, support) in enumerate(candidates):
            if set(support) & reg.sites:
                continue
            out1 = _apply_channel(d_rs, rho, atol)
            out2 = _apply_channel(d_sr, sigma, atol)
            err = max(trace_distance(out1.matrix, sigma.matrix),
                      trace_distance(out2.matrix, rho.matrix))
            if best is None or err < best:
                best, best_idx = err, ci
        if best is None:
            inconclusive = True
            witnesses.append(tuple(sorted(reg.sites)))
            continue
        rows.append((tuple(sorted(reg.sites)), float(best), best_idx))
        eps = max(eps, best)
    return LIAuditResult(None if inconclusive else float(eps), rows,
                         inconclusive, witnesses)


def _apply_channel(channel, state: DenseState, atol: float) -> DenseState:
    if isinstance(channel, ChannelGate):
        return apply_gate(state, channel, atol=atol)
    return channel(state)


def conjugated_candidates(circuit: ChannelCircuit, region: Region,
                          base_candidates, atol: float = 1e-6):
    """Push candidate channels through the circuit: gates overlapping the
    exterior of the buffered region are applied around the base channel
    (reversals first, base channel, then the gates in order)."""
    buffer = region.dilate(circuit.range_)
    exterior = buffer.complement()
    picked = [i for i, g in enumerate(circuit.gates)
              if set(g.support) & exterior.sites]

    def wrap(base):
        def channel(state: DenseState) -> DenseState:
            cur = state
            for i in reversed(picked):
                cur = apply_gate(cur, circuit.reversals[i], atol=atol)
            cur = _apply_channel(base, cur, atol)
            for i in picked:
                cur = apply_gate(cur, circuit.gates[i], atol=atol)
            return cur
        return channel

    out = []
    for d_rs, d_sr, support in base_candidates:
        combined_support = set(support)
        for i in picked:
            combined_support |= set(circuit.gates[i].support)
        out.append((wrap(d_rs), wrap(d_sr), tuple(sorted(combined_support))))
    return out


def ground_space_scale(family: InteractionFamily, target_error: float,
                       s0: float = 1.0, max_doublings: int = 16):
    """Doubling search for a coupling scale whose thermal state sits within
    `target_error` trace distance of the normalized ground projector."""
    pi, rank = ground_state_projector(family)
    pi = pi / rank
    s = s0
    for _ in range(max_doublings):
        rho = gibbs_state(family.with_couplings(s * family.couplings))
        d = trace_distance(rho.matrix, pi)
        if d <= target_error:
            return s, d
        s *= 2.0
    raise RuntimeError(f"no scale within {max_doublings} doublings reached "
                       f"the target {target_error}")
