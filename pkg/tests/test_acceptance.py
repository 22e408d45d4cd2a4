"""Acceptance battery: every structural inequality the artifact promises,
run at its stated tolerance on small exact instances. One printed line per
criterion (run with `pytest tests/test_acceptance.py -v -s`)."""

import time

import numpy as np

from gibbslab.circuits import global_variation_circuit, local_variation_gate, lr_audit
from gibbslab.lindblad import (
    commuting_flow_generator,
    drift_bound_check,
    flow_integrate,
    flow_residual_check,
)
from gibbslab.memory import memory_experiment, repetition_code
from gibbslab.model import (
    annulus_partition,
    gibbs_state,
    ising_chain,
    tfim_chain,
)
from gibbslab.qbp import (
    belief_propagation_operator,
    flow_identity_residual,
    response_identity_check,
)
from gibbslab.qcore import (
    DenseState,
    PAULI,
    cmi,
    embed_operator,
    fidelity,
    random_density_matrix,
    random_hermitian,
    trace_distance,
)
from gibbslab.recovery import beta0, petz_recovery, twirled_recovery
from gibbslab.stabilizer import (
    boundary_algebra_equality,
    ising_disorder_parameter,
    planar2d_model,
    stab_expectation,
    symmetric_depolarizer_gap,
    toric2d_loop_correlators,
    toric2d_model,
    toric4d_ball,
    toric4d_generators,
)

SEED = 7041


def _report(name, ok, started, budget, detail=""):
    status = "PASS" if ok else "FAIL"
    elapsed = time.time() - started
    print(f"{status}: {name} ({elapsed:.1f}s / budget {budget:.0f}s) {detail}")
    assert ok, f"{name}: {detail}"
    assert elapsed < budget, f"{name} exceeded its runtime budget"


def test_criterion_01_commuting_markov_exactness():
    started = time.time()
    fam = ising_chain(8, coupling=1.0, field=0.4)
    rho = gibbs_state(fam)
    part = annulus_partition(fam.lattice, 0, 1, 1, 1)
    a = part.a.sorted_sites()
    assert part.separation() > fam.interaction_range
    cmi_val = cmi(rho, a, part.b.sorted_sites(), part.c.sorted_sites())
    rm = petz_recovery(rho, support=tuple(sorted(part.a.sites | part.b.sites)),
                       erase_labels=a)
    rec_err = trace_distance(rm.apply(rho).matrix, rho.matrix)
    _report("commuting Markov exactness",
            cmi_val < 1e-9 and rec_err < 1e-8, started, 10,
            f"cmi={cmi_val:.2e} recovery={rec_err:.2e}")


def test_criterion_02_recoverability_inequalities():
    started = time.time()
    rng = np.random.default_rng(SEED)
    worst_trace, worst_fid = -np.inf, -np.inf
    for _ in range(200):
        m = random_density_matrix(3, rng)
        st = DenseState(m, (0, 1, 2))
        i_val = cmi(st, (0,), (1,), (2,))
        rec = twirled_recovery(st, support=(1, 2), erase_labels=(2,)).apply(st)
        worst_trace = max(worst_trace,
                          trace_distance(rec.matrix, m)
                          - np.sqrt(4 * np.log(2) * i_val))
        f = fidelity(m, rec.matrix)
        worst_fid = max(worst_fid, -2 * np.log2(max(f, 1e-300)) - i_val)
    _report("recoverability inequalities (200 states)",
            worst_trace <= 1e-8 and worst_fid <= 1e-6, started, 60,
            f"trace slack={worst_trace:.2e} fidelity slack={worst_fid:.2e}")


def test_criterion_03_local_variation_radius_sweep():
    started = time.time()
    fam = tfim_chain(8, coupling=0.5, g=0.3)
    region = fam.lattice.ball(0, 1)
    delta = np.zeros(len(fam.terms))
    delta[[i for i, t in enumerate(fam.terms) if t.name == "zz0"][0]] = 0.1
    errors = []
    reversal_ok = True
    for r in (1, 2, 3):
        res = local_variation_gate(fam, delta, region, r, r)
        errors.append(res.forward_error)
        if res.roundtrip_error > 2 * max(res.forward_error,
                                         res.backward_error) + 1e-9:
            reversal_ok = False
    monotone = all(a >= b for a, b in zip(errors, errors[1:]))
    _report("local variation radius monotonicity + reversal",
            monotone and reversal_ok, started, 300,
            "errors=" + ",".join(f"{e:.2e}" for e in errors))


def test_criterion_04_global_circuit_bounds():
    started = time.time()
    fam = ising_chain(8, coupling=1.0, field=0.3)
    path = [fam.couplings * s for s in np.linspace(0.2, 0.6, 5)]
    res = global_variation_circuit(fam, path, r_a=1, r1=1, r2=1,
                                   delta_cap=0.11)
    rho0 = gibbs_state(fam.with_couplings(path[0]))
    audit = lr_audit(res.circuit, rho0)
    eps_c = res.sum_local_errors + max(
        max(s.forward_error, s.backward_error) for s in res.steps)
    telescope = res.measured_global_error <= res.sum_local_errors + 1e-8
    lr_ok = audit.eps_lr <= 2 * eps_c + 1e-8
    reversal_ok = audit.roundtrip_error <= audit.reversal_bound + 1e-8
    _report("global circuit telescoping + reversibility",
            telescope and lr_ok and reversal_ok, started, 600,
            f"global={res.measured_global_error:.2e} "
            f"sum={res.sum_local_errors:.2e} eps_lr={audit.eps_lr:.2e}")


def test_criterion_05_flow_generator_bounds():
    started = time.time()
    rng = np.random.default_rng(SEED)
    fam = ising_chain(8, coupling=1.0, field=0.3)
    base = fam.couplings

    def path(s):
        return base * (0.2 + 0.3 * s)

    pointwise_ok = True
    norms_ok = True
    worst_resid = -np.inf
    for s in np.linspace(0.025, 0.975, 20):
        rep = flow_residual_check(fam, path, float(s), r=1, rng=rng)
        worst_resid = max(worst_resid, rep.lhs - rep.sum_onesided_exact)
        if rep.lhs > rep.sum_onesided_exact + 1e-7:
            pointwise_ok = False
        gen = commuting_flow_generator(fam, path, float(s), 1)
        for term in gen.terms:
            if term.norm_lower_bound(restarts=2, iters=10, rng=rng) > 4 + 1e-6:
                norms_ok = False
    rho0 = gibbs_state(fam.with_couplings(path(0.0)))
    rho1 = gibbs_state(fam.with_couplings(path(1.0)))
    errs = []
    for r in (0, 1, 2):
        out = flow_integrate(
            lambda s, rr=r: commuting_flow_generator(fam, path, s, rr),
            rho0, n_steps=64, target=rho1)
        errs.append(out.error_vs_target)
    decreasing = errs[0] > errs[1] > errs[2]
    _report("flow generator residual + range tradeoff + norm caps",
            pointwise_ok and norms_ok and decreasing, started, 300,
            f"worst slack={worst_resid:.2e} "
            "eps_L=" + ",".join(f"{e:.2e}" for e in errs))


def test_criterion_06_loop_statistics_exactness():
    started = time.time()
    rep = toric2d_loop_correlators(2, 2, [(0, 0)], [(0, 0), (0, 1)],
                                   beta_inner=1.0, beta_outer=3.0)
    formulas_ok = rep.formula_vs_stab < 1e-12 and rep.dense_residual < 1e-10
    bound_ok = rep.connected >= rep.bound - 1e-12
    _report("loop statistics vs dense evaluation",
            formulas_ok and bound_ok, started, 60,
            f"dense gap={rep.dense_residual:.2e} "
            f"connected={rep.connected:.4f} >= bound={rep.bound:.4f} "
            f"(ground distance={rep.ground_distance:.3f})")


def test_criterion_07_boundary_algebra_comparison():
    started = time.time()
    gens, nq, centers = toric4d_generators(3)
    rep4 = boundary_algebra_equality(gens, nq, toric4d_ball(3, centers, 2))
    model, hid, vid = planar2d_model(5, 5)
    a_edges = [hid[(1, 1)], hid[(2, 1)], vid[(1, 1)], vid[(1, 2)]]
    rep2 = boundary_algebra_equality(model.full_rows, model.n, a_edges)
    plaq_rows = np.array([g.symplectic_row() for g in model.generators
                          if g.name.startswith("plaq")], dtype=np.uint8)
    repz = boundary_algebra_equality(plaq_rows, model.n, a_edges)
    witness_is_loop = (repz.witness is not None
                       and not repz.witness.x.any()
                       and repz.witness.weight >= 8)
    _report("boundary algebra: 4d equality, 2d strict with loop witness",
            rep4.equal and not rep2.equal and witness_is_loop, started, 300,
            f"4d ranks {rep4.rank_generated}/{rep4.rank_supported}, "
            f"2d ranks {rep2.rank_generated}/{rep2.rank_supported}, "
            f"loop weight {repz.witness.weight if repz.witness else '-'}")


def test_criterion_08_disorder_parameter():
    started = time.time()
    classical = ising_chain(6, coupling=0.8, field=0.0, periodic=False)
    zero_val = ising_disorder_parameter(classical,
                                        classical.lattice.region([1, 2]))
    tfim = tfim_chain(6, coupling=0.6, g=0.5, periodic=False)
    worst_gap = 0.0
    for k in (1, 2, 3):
        gap, dis = symmetric_depolarizer_gap(
            tfim, tfim.lattice.region(list(range(k))))
        worst_gap = max(worst_gap, abs(gap - dis))
    _report("flip disorder parameter",
            zero_val < 1e-15 and worst_gap < 1e-9, started, 60,
            f"classical={zero_val:.1e} channel identity gap={worst_gap:.2e}")


def test_criterion_09_steady_drift_bound():
    started = time.time()
    rng = np.random.default_rng(SEED)

    class _Gkls:
        def __init__(self, h, ls):
            self.h, self.ls = h, ls
            self.terms = [None]

        def apply(self, m):
            out = -1j * (self.h @ m - m @ self.h)
            for l in self.ls:
                out += l @ m @ l.conj().T - 0.5 * (
                    l.conj().T @ l @ m + m @ l.conj().T @ l)
            return out

        def norm_estimate(self):
            return 2 * np.linalg.norm(self.h, 2) + sum(
                2 * np.linalg.norm(l, 2) ** 2 for l in self.ls)

    worst = -np.inf
    for _ in range(100):
        gen = _Gkls(random_hermitian(4, rng),
                    [0.5 * (rng.normal(size=(4, 4))
                            + 1j * rng.normal(size=(4, 4)))
                     for _ in range(2)])
        rho = DenseState(random_density_matrix(2, rng), (0, 1))
        t = float(rng.uniform(0.1, 2.5))
        lhs, rhs = drift_bound_check(gen, rho, t)
        worst = max(worst, lhs - rhs)
    _report("steady drift bound (100 random triples)", worst <= 1e-8,
            started, 60, f"worst slack={worst:.2e}")


def test_criterion_10_response_identity_and_filter():
    started = time.time()
    rng = np.random.default_rng(SEED)
    fam = tfim_chain(4, coupling=0.6, g=0.5, periodic=False)
    h0 = fam.hamiltonian()
    sites = tuple(range(4))
    v = 0.3 * embed_operator(PAULI["Z"], (0,), sites)
    obs = embed_operator(PAULI["Z"], (3,), sites)
    rep = response_identity_check(h0, v, obs, n_nodes=64)
    contraction_ok = True
    for _ in range(50):
        hm = random_hermitian(8, rng)
        vm = random_hermitian(8, rng)
        phi = belief_propagation_operator(hm, vm)
        if np.linalg.norm(phi, 2) > np.linalg.norm(vm, 2) + 1e-10:
            contraction_ok = False
    ode_resid = flow_identity_residual(lambda s: h0 + s * v, 0.4)
    _report("response identity + filter properties",
            rep.residual < 1e-5 and contraction_ok and ode_resid < 1e-6,
            started, 120,
            f"identity residual={rep.residual:.2e} ode={ode_resid:.2e}")


def test_criterion_11_memory_bound_chain():
    started = time.time()
    code = repetition_code(6)
    run = memory_experiment(code, 2.0 * code.family.couplings,
                            r_a=1, r1=1, r2=1, delta_cap=0.75)
    chain_ok = True
    zero_ok = True
    for name in ("zero", "one", "plus", "minus"):
        audit = run.lr_audits[name]
        if run.eps0[name] > run.circuit.n_gates * audit.eps_lr + 1e-8:
            zero_ok = False
        for t, eps_t, bound, _ in run.trajectories[name]:
            if eps_t > run.eps0[name] + t * run.drive_norms[name] + 1e-7:
                chain_ok = False
    _report("memory error-bound chain (4 codewords, 7 grid points)",
            chain_ok and zero_ok, started, 600,
            f"gates={run.circuit.n_gates} "
            f"eps0(zero)={run.eps0['zero']:.2e} "
            f"drive(zero)={run.drive_norms['zero']:.2e}")


def test_criterion_12_known_values():
    started = time.time()
    d = 8
    v = np.zeros(d)
    v[0] = v[-1] = 1 / np.sqrt(2)
    ghz = DenseState(np.outer(v, v), (0, 1, 2))
    ghz_gap = abs(cmi(ghz, (0,), (1,), (2,)) - 1.0)
    t = np.linspace(-12, 12, 401)
    w = beta0(t) * (t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    quad_gap = abs(float(w.sum()) - 1.0)
    model = toric2d_model(2, 2, 1.0, 1.0)
    parity_gap = abs(stab_expectation(model, model.generators[0]).real
                     - 0.761594)
    _report("known-value spot checks",
            ghz_gap < 1e-9 and quad_gap < 1e-8 and parity_gap < 1e-6,
            started, 60,
            f"ghz={ghz_gap:.1e} quadrature={quad_gap:.1e} "
            f"parity={parity_gap:.1e}")
