"""Configuration-driven experiment runner and verification battery.

Entry points: `glab run <config>`, `glab sweep <config> --axis f --values ...`,
`glab verify-all [--quick]`. Every run emits CSV data, a summary.json with one
row per audited inequality, and a manifest with input/output hashes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path


def _setup_threads() -> None:
    want = os.environ.get("GIBBSLAB_THREADS")
    if want:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, want)


_setup_threads()

import numpy as np

from .report import AuditReport, file_sha256, manifest, write_csv


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_TASKS = ("gibbs", "cluster", "cmi", "connect", "lindblad-flow", "toric",
          "memory", "verify-all")

_TASK_PARAMS = {
    "gibbs": {"scale"},
    "cluster": {"scale", "center", "r_a", "widths", "delta", "n_samples",
                "restrict"},
    "cmi": {"scale", "center", "r_a", "widths", "tolerance"},
    "connect": {"start_scale", "end_scale", "n_steps", "r_a", "r_1", "r_2",
                "delta"},
    "lindblad-flow": {"start_scale", "end_scale", "radii", "n_steps",
                      "s_checks"},
    "toric": {"lx", "ly", "beta_inner", "beta_outer", "plaqs_a", "plaqs_b",
              "check_4d", "extent_4d", "radius_4d"},
    "memory": {"target_scale", "r_a", "r_1", "r_2", "delta", "time_grid",
               "encode_eps"},
    "verify-all": {"quick"},
}


@dataclass
class ExperimentConfig:
    task: str
    model: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    schema: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if self.schema != 1:
            raise ConfigError(f"unsupported schema version {self.schema}")
        if self.task not in _TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {_TASKS}")
        allowed = _TASK_PARAMS[self.task]
        unknown = set(self.params) - allowed
        if unknown:
            raise ConfigError(
                f"unknown parameter(s) {sorted(unknown)} for task {self.task!r}")
        _validate_numeric(self.params)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        known = {"task", "model", "params", "seed", "schema", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        if "task" not in d:
            raise ConfigError("config needs a 'task'")
        return ExperimentConfig(
            task=d["task"], model=dict(d.get("model", {})),
            params=dict(d.get("params", {})), seed=int(d.get("seed", 0)),
            schema=int(d.get("schema", 1)), output_dir=d.get("output_dir"))

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            try:
                data = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config is neither JSON nor TOML: {exc}")
        return ExperimentConfig.from_dict(data)

    def to_dict(self) -> dict:
        d = {"schema": self.schema, "task": self.task, "model": self.model,
             "params": self.params, "seed": self.seed}
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d


def _validate_numeric(params: dict) -> None:
    for key in ("r_a", "r_1", "r_2"):
        if key in params and params[key] < 0:
            raise ConfigError(f"{key} must be nonnegative, got {params[key]}")
    for key in ("n_steps", "n_samples"):
        if key in params and params[key] < 1:
            raise ConfigError(f"{key} must be positive, got {params[key]}")


def _family_of(config: ExperimentConfig):
    from .model import load_family
    model = config.model or {"name": "ising_chain",
                             "params": {"n": 6, "field": 0.3,
                                        "periodic": False}}
    return load_family(model)


# ----------------------------------------------------------------------------
# task implementations: each returns (AuditReport, {file: (header, rows)},
# metrics dict)
# ----------------------------------------------------------------------------

def _task_gibbs(config, rng):
    from .model import gibbs_state
    from .qcore import entropy
    fam = _family_of(config)
    scale = float(config.params.get("scale", 1.0))
    fam = fam.with_couplings(scale * fam.couplings)
    rho = gibbs_state(fam)
    report = AuditReport()
    tr = float(np.real(np.trace(rho.matrix)))
    report.add("state-trace", abs(tr - 1.0), 0.0, 1e-10, "thermal-state-contract")
    ev_min = float(np.linalg.eigvalsh(rho.matrix).min())
    report.add("state-positivity", -ev_min, 0.0, 1e-10, "thermal-state-contract")
    ent = entropy(rho.matrix)
    csvs = {"gibbs.csv": (("quantity", "value"),
                          [("entropy_bits", ent), ("trace", tr),
                           ("min_eigenvalue", ev_min)])}
    return report, csvs, {"entropy": ent}


def _partitions_for(fam, center, r_a, widths):
    from .model import annulus_partition
    parts = []
    for w1, w2 in widths:
        try:
            parts.append(annulus_partition(fam.lattice, center, r_a, w1, w2))
        except Exception:
            continue
    return parts


def _task_cmi(config, rng):
    from .model import gibbs_state
    from .qcore import cmi
    fam = _family_of(config)
    scale = float(config.params.get("scale", 1.0))
    fam = fam.with_couplings(scale * fam.couplings)
    rho = gibbs_state(fam)
    center = int(config.params.get("center", 0))
    r_a = int(config.params.get("r_a", 0))
    widths = config.params.get("widths", [[1, 0], [1, 1], [2, 1]])
    tol = float(config.params.get("tolerance", 1e-9))
    parts = _partitions_for(fam, center, r_a, widths)
    report = AuditReport()
    rows = []
    commuting = fam.is_commuting()
    big_r = fam.interaction_range
    for p in parts:
        val = cmi(rho, p.a.sorted_sites(), p.b.sorted_sites(),
                  p.c.sorted_sites())
        rows.append((p.separation(), val))
        if commuting and p.separation() > big_r:
            report.add(f"markov-exactness-d{p.separation()}", val, 0.0, tol,
                       "commuting-markov-exactness")
    csvs = {"cmi.csv": (("separation", "cmi_bits"), rows)}
    return report, csvs, {"max_cmi": max((v for _, v in rows), default=0.0)}


def _task_cluster(config, rng):
    from .correlations import clustering_scan, stable_clustering_probe
    fam = _family_of(config)
    scale = float(config.params.get("scale", 1.0))
    fam = fam.with_couplings(scale * fam.couplings)
    center = int(config.params.get("center", 0))
    r_a = int(config.params.get("r_a", 0))
    widths = config.params.get("widths",
                               [[1, 0], [1, 1], [2, 1], [2, 2]])
    delta = float(config.params.get("delta", 0.0))
    restrict = bool(config.params.get("restrict", True))
    parts = _partitions_for(fam, center, r_a, widths)
    report = AuditReport()
    rows = []
    if delta > 0:
        probe = stable_clustering_probe(
            fam, delta, int(config.params.get("n_samples", 4)), parts,
            rng=rng, use_restriction=restrict)
        for pid, _dv, fit in probe.fits:
            for d, lo, up in fit.samples:
                rows.append((d, lo, up, "restricted" if restrict else "full",
                             pid))
        fit = probe.worst
        report.add("stable-clustering-violation",
                   1.0 if probe.violated else 0.0, 0.0, 0.5,
                   "stable-clustering-probe",
                   note="violation flagged" if probe.violated else "no violation")
    else:
        fit = clustering_scan(fam, parts, rng=rng, use_restriction=restrict)
        for d, lo, up in fit.samples:
            rows.append((d, lo, up, "restricted" if restrict else "full", 0))
    metrics = {}
    if fit.xi is not None:
        metrics = {"xi": fit.xi, "r_squared": fit.r_squared,
                   "log_prefactor": fit.log_prefactor}
        report.add("clustering-fit-quality", 0.5, fit.r_squared, 0.0,
                   "clustering-decay-fit",
                   note=f"xi={fit.xi:.3f}")
    csvs = {"covariance.csv": (("separation", "lower", "upper", "restriction",
                                "perturbation_id"), rows)}
    summary = {"xi": fit.xi, "log_prefactor": fit.log_prefactor,
               "r_squared": fit.r_squared, "below_floor": fit.below_floor}
    return report, csvs, metrics, summary


def _task_connect(config, rng):
    from .circuits import global_variation_circuit, lr_audit
    from .model import gibbs_state
    fam = _family_of(config)
    p = config.params
    start = float(p.get("start_scale", 0.2))
    end = float(p.get("end_scale", 0.6))
    n_steps = int(p.get("n_steps", 4))
    delta = float(p.get("delta", 0.12))
    base = fam.couplings
    path = [base * s for s in np.linspace(start, end, n_steps + 1)]
    res = global_variation_circuit(
        fam, path, int(p.get("r_a", 1)), int(p.get("r_1", 1)),
        int(p.get("r_2", 1)), delta_cap=delta)
    rho0 = gibbs_state(fam.with_couplings(path[0]))
    audit = lr_audit(res.circuit, rho0)
    report = AuditReport()
    report.add("telescoped-global-error", res.measured_global_error,
               res.sum_local_errors, res.circuit.n_gates * 1e-9 + 1e-8,
               "variation-error-telescope")
    eps_c = res.sum_local_errors + max(
        (max(s.forward_error, s.backward_error) for s in res.steps),
        default=0.0)
    report.add("local-reversibility-vs-budget", audit.eps_lr, 2 * eps_c,
               1e-8, "reversibility-from-variation-budget")
    report.add("reversal-circuit-error", audit.roundtrip_error,
               audit.reversal_bound, 1e-8, "reversal-circuit-telescope")
    rows = []
    cum = 0.0
    for s in res.steps:
        cum += s.forward_error
        rows.append((s.step, s.block, s.forward_error, cum,
                     res.measured_global_error))
    csvs = {"ledger.csv": (("step", "block", "local_error",
                            "cumulative_bound", "measured_global_error"),
                           rows)}
    metrics = {"global_error": res.measured_global_error,
               "eps_lr": audit.eps_lr,
               "sum_local": res.sum_local_errors}
    return report, csvs, metrics


def _task_lindblad_flow(config, rng):
    from .lindblad import commuting_flow_generator, flow_integrate, \
        flow_residual_check
    from .model import gibbs_state
    fam = _family_of(config)
    p = config.params
    start = float(p.get("start_scale", 0.2))
    end = float(p.get("end_scale", 0.5))
    radii = [int(r) for r in p.get("radii", [0, 1, 2])]
    n_steps = int(p.get("n_steps", 64))
    s_checks = int(p.get("s_checks", 5))
    base = fam.couplings
    path = lambda s: base * (start + (end - start) * s)
    rho0 = gibbs_state(fam.with_couplings(path(0.0)))
    rho1 = gibbs_state(fam.with_couplings(path(1.0)))
    report = AuditReport()
    rows = []
    errs = []
    for r in radii:
        out = flow_integrate(
            lambda s, rr=r: commuting_flow_generator(fam, path, s, rr),
            rho0, n_steps=n_steps, target=rho1)
        errs.append((r, out.error_vs_target))
    for i in range(1, len(errs)):
        report.add(f"flow-error-decreasing-r{errs[i][0]}", errs[i][1],
                   errs[i - 1][1], 0.0, "flow-range-tradeoff")
    r_audit = radii[len(radii) // 2]
    for s in np.linspace(0.05, 0.95, s_checks):
        rep = flow_residual_check(fam, path, float(s), r_audit, rng=rng)
        rows.append((float(s), rep.lhs, rep.sum_onesided_exact))
        report.add(f"flow-residual-s{s:.2f}", rep.lhs,
                   rep.sum_onesided_exact, 1e-7, "flow-residual-vs-covariance")
        report.add(f"derivative-cross-check-s{s:.2f}",
                   rep.derivative_cross_check, 0.0, 1e-7,
                   "thermal-derivative-identity")
    csvs = {"flow.csv": (("s", "residual", "bound"), rows),
            "flow_errors.csv": (("radius", "error"), errs)}
    metrics = {f"flow_error_r{r}": e for r, e in errs}
    return report, csvs, metrics


def _task_toric(config, rng):
    from .stabilizer import boundary_algebra_equality, planar2d_model, \
        toric2d_loop_correlators, toric4d_ball, toric4d_generators
    p = config.params
    lx, ly = int(p.get("lx", 2)), int(p.get("ly", 2))
    rep = toric2d_loop_correlators(
        lx, ly, [tuple(q) for q in p.get("plaqs_a", [[0, 0]])],
        [tuple(q) for q in p.get("plaqs_b", [[0, 0], [0, 1]])],
        float(p.get("beta_inner", 1.0)), float(p.get("beta_outer", 3.0)))
    report = AuditReport()
    report.add("loop-formula-vs-group-solve", rep.formula_vs_stab, 0.0, 1e-12,
               "loop-parity-product")
    if rep.dense_residual is not None:
        report.add("loop-formula-vs-dense", rep.dense_residual, 0.0, 1e-10,
                   "loop-parity-product")
    report.add("loop-connected-bound", rep.bound, rep.connected, 1e-12,
               "loop-connected-lower-bound")
    model, hid, vid = planar2d_model(5, 5)
    a_edges = [hid[(1, 1)], hid[(2, 1)], vid[(1, 1)], vid[(1, 2)]]
    eq2 = boundary_algebra_equality(model.full_rows, model.n, a_edges)
    report.add("planar-boundary-algebra-strict", 1.0,
               0.0 if eq2.equal else 1.0, 0.0, "boundary-algebra-gap",
               note="witness weight "
                    f"{eq2.witness.weight if eq2.witness else 0}")
    rows = [("exp_inner", rep.exp_inner), ("exp_outer", rep.exp_outer),
            ("exp_joint", rep.exp_joint), ("connected", rep.connected),
            ("bound", rep.bound)]
    if p.get("check_4d", False):
        gens, nq, centers = toric4d_generators(int(p.get("extent_4d", 3)))
        ball = toric4d_ball(int(p.get("extent_4d", 3)), centers,
                            int(p.get("radius_4d", 2)))
        eq4 = boundary_algebra_equality(gens, nq, ball)
        report.add("hyper-boundary-algebra-equality",
                   0.0 if eq4.equal else 1.0, 0.0, 0.0,
                   "boundary-algebra-gap")
        rows.append(("hyper_equal", 1.0 if eq4.equal else 0.0))
    csvs = {"toric.csv": (("quantity", "value"), rows)}
    return report, csvs, {"connected": rep.connected}


def _task_memory(config, rng):
    from .memory import memory_bound_audit, memory_experiment, repetition_code
    p = config.params
    model = config.model or {"name": "ising_chain",
                             "params": {"n": 6, "field": 0.0,
                                        "periodic": False}}
    n = int(model.get("params", {}).get("n", 6))
    code = repetition_code(n, periodic=bool(
        model.get("params", {}).get("periodic", False)))
    target = float(p.get("target_scale", 2.0)) * code.family.couplings
    grid = tuple(float(t) for t in p.get(
        "time_grid", (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)))
    run = memory_experiment(
        code, target, int(p.get("r_a", 1)), int(p.get("r_1", 1)),
        int(p.get("r_2", 1)), delta_cap=float(p.get("delta", 0.75)),
        encode_eps=float(p.get("encode_eps", 1e-3)), time_grid=grid)
    report = AuditReport()
    anchor_of = {
        "decode-zero-vs-reversal-budget": "reversal-circuit-telescope",
        "steadiness-triangle": "drive-norm-triangle",
        "mixed-codeword-term-residual": "steady-term-residual",
        "encoded-distinguishability": "encoded-pair-distinguishability",
    }
    for row in memory_bound_audit(run):
        if row.name.startswith("trajectory-bound"):
            anchor = "memory-error-bound-chain"
        elif row.name.startswith("drift-bound"):
            anchor = "steady-drift-bound"
        else:
            anchor = anchor_of.get(row.name, "memory-audit")
        if row.name == "encoded-distinguishability":
            report.add(f"{row.name}", row.lhs, row.rhs, row.slack, anchor)
        else:
            report.add(f"{row.name}[{row.codeword}]", row.lhs, row.rhs,
                       row.slack, anchor)
    rows = []
    for name, traj in run.trajectories.items():
        for t, eps_t, bound, _ in traj:
            rows.append((t, name, eps_t, bound))
    csvs = {"memory.csv": (("t", "codeword", "eps_t", "bound"), rows)}
    metrics = {"encoding_error": run.encoding_error,
               "worst_eps_end": max(traj[-1][1]
                                    for traj in run.trajectories.values())}
    return report, csvs, metrics


def _task_verify_all(config, rng):
    quick = bool(config.params.get("quick", False))
    report = AuditReport()
    csvs = {}
    _verify_known_values(report)
    _verify_recovery(report, rng, n_states=40 if quick else 200)
    _verify_chain_suite(report, rng, quick)
    _verify_toric(report)
    _verify_qbp(report, rng, quick)
    _verify_drift(report, rng, n_samples=20 if quick else 100)
    _verify_disorder(report, rng, quick)
    if not quick:
        from .stabilizer import boundary_algebra_equality, toric4d_ball, \
            toric4d_generators
        gens, nq, centers = toric4d_generators(3)
        eq4 = boundary_algebra_equality(gens, nq, toric4d_ball(3, centers, 2))
        report.add("hyper-boundary-algebra-equality",
                   0.0 if eq4.equal else 1.0, 0.0, 0.0,
                   "boundary-algebra-gap")
    rows = [(r.name, r.lhs, r.rhs, "pass" if r.passed else "FAIL")
            for r in report.rows]
    csvs["verify.csv"] = (("check", "lhs", "rhs", "status"), rows)
    return report, csvs, {"n_checks": float(len(report.rows))}


def _verify_known_values(report):
    from .qcore import DenseState, cmi
    from .recovery import beta0
    from .stabilizer import stab_expectation, toric2d_model
    t = np.linspace(-12, 12, 401)
    w = beta0(t) * (t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    report.add("weight-normalization", abs(float(w.sum()) - 1.0), 0.0, 1e-8,
               "rotation-weight-normalization")
    d = 8
    v = np.zeros(d)
    v[0] = v[-1] = 1 / np.sqrt(2)
    ghz = DenseState(np.outer(v, v), (0, 1, 2))
    report.add("ghz-cmi", abs(cmi(ghz, (0,), (1,), (2,)) - 1.0), 0.0, 1e-9,
               "ghz-conditional-information")
    m = toric2d_model(2, 2, 1.0, 1.0)
    val = stab_expectation(m, m.generators[0]).real
    report.add("plaquette-parity-value", abs(val - 0.761594), 0.0, 1e-6,
               "plaquette-parity-product")


def _verify_recovery(report, rng, n_states):
    from .qcore import DenseState, cmi, fidelity, random_density_matrix, \
        trace_distance
    from .recovery import twirled_recovery
    worst_t, worst_f = -np.inf, -np.inf
    for _ in range(n_states):
        m = random_density_matrix(3, rng)
        st = DenseState(m, (0, 1, 2))
        i_val = cmi(st, (0,), (1,), (2,))
        rec = twirled_recovery(st, support=(1, 2), erase_labels=(2,)).apply(st)
        worst_t = max(worst_t,
                      trace_distance(rec.matrix, m)
                      - np.sqrt(4 * np.log(2) * i_val))
        f = fidelity(m, rec.matrix)
        worst_f = max(worst_f, -2 * np.log2(max(f, 1e-300)) - i_val)
    report.add("recovery-trace-bound", worst_t, 0.0, 1e-8,
               "recovery-trace-bound", note=f"{n_states} states")
    report.add("recovery-fidelity-bound", worst_f, 0.0, 1e-6,
               "recovery-fidelity-bound")


def _verify_chain_suite(report, rng, quick):
    from .circuits import global_variation_circuit, lr_audit
    from .lindblad import commuting_flow_generator, flow_integrate, \
        flow_residual_check, heatbath_generator
    from .model import annulus_partition, gibbs_state, ising_chain
    from .qcore import cmi, trace_distance
    from .recovery import petz_recovery
    fam = ising_chain(6, coupling=1.0, field=0.3, periodic=False)
    rho = gibbs_state(fam)
    part = annulus_partition(fam.lattice, 0, 0, 2, 0)
    a, b, c = part.a.sorted_sites(), part.b.sorted_sites(), part.c.sorted_sites()
    report.add("markov-exactness", cmi(rho, a, b, c), 0.0, 1e-9,
               "commuting-markov-exactness")
    rm = petz_recovery(rho, support=tuple(sorted(a + b)), erase_labels=a)
    report.add("markov-recovery", trace_distance(rm.apply(rho).matrix,
                                                 rho.matrix), 0.0, 1e-8,
               "commuting-markov-exactness")
    base = fam.couplings
    steps = 2 if quick else 4
    path = [base * s for s in np.linspace(0.3, 0.6, steps + 1)]
    res = global_variation_circuit(fam, path, 1, 1, 1, delta_cap=0.2)
    audit = lr_audit(res.circuit, gibbs_state(fam.with_couplings(path[0])))
    report.add("telescoped-global-error", res.measured_global_error,
               res.sum_local_errors, res.circuit.n_gates * 1e-9 + 1e-8,
               "variation-error-telescope")
    eps_c = res.sum_local_errors + max(
        max(s.forward_error, s.backward_error) for s in res.steps)
    report.add("local-reversibility-vs-budget", audit.eps_lr, 2 * eps_c, 1e-8,
               "reversibility-from-variation-budget")
    report.add("reversal-circuit-error", audit.roundtrip_error,
               audit.reversal_bound, 1e-8, "reversal-circuit-telescope")
    path_fn = lambda s: base * (0.2 + 0.3 * s)
    rep = flow_residual_check(fam, path_fn, 0.5, 1, rng=rng)
    report.add("flow-residual", rep.lhs, rep.sum_onesided_exact, 1e-7,
               "flow-residual-vs-covariance")
    hb = heatbath_generator(fam)
    report.add("heatbath-stationarity",
               max(hb.frustration_residuals(rho)), 0.0, 1e-9,
               "frustration-free-steady-state")
    if not quick:
        rho0 = gibbs_state(fam.with_couplings(path_fn(0.0)))
        rho1 = gibbs_state(fam.with_couplings(path_fn(1.0)))
        e0 = flow_integrate(lambda s: commuting_flow_generator(
            fam, path_fn, s, 0), rho0, n_steps=32, target=rho1)
        e1 = flow_integrate(lambda s: commuting_flow_generator(
            fam, path_fn, s, 1), rho0, n_steps=32, target=rho1)
        report.add("flow-error-decreasing", e1.error_vs_target,
                   e0.error_vs_target, 0.0, "flow-range-tradeoff")


def _verify_toric(report):
    from .stabilizer import boundary_algebra_equality, planar2d_model, \
        toric2d_loop_correlators
    rep = toric2d_loop_correlators(2, 2, [(0, 0)], [(0, 0), (0, 1)], 1.0, 3.0)
    report.add("loop-formula-vs-dense", rep.dense_residual, 0.0, 1e-10,
               "loop-parity-product")
    report.add("loop-connected-bound", rep.bound, rep.connected, 1e-12,
               "loop-connected-lower-bound")
    model, hid, vid = planar2d_model(5, 5)
    eq2 = boundary_algebra_equality(
        model.full_rows, model.n,
        [hid[(1, 1)], hid[(2, 1)], vid[(1, 1)], vid[(1, 2)]])
    report.add("planar-boundary-algebra-strict", 1.0,
               0.0 if eq2.equal else 1.0, 0.0, "boundary-algebra-gap")


def _verify_qbp(report, rng, quick):
    from .model import tfim_chain
    from .qbp import belief_propagation_operator, flow_identity_residual, \
        response_identity_check
    from .qcore import random_hermitian
    fam = tfim_chain(4, coupling=0.6, g=0.5, periodic=False)
    h0 = fam.hamiltonian()
    from .qcore import PAULI, embed_operator
    sites = tuple(range(4))
    v = 0.3 * embed_operator(PAULI["Z"], (0,), sites)
    obs = embed_operator(PAULI["Z"], (3,), sites)
    rep = response_identity_check(h0, v, obs, n_nodes=64)
    report.add("response-identity-residual", rep.residual, 0.0, 1e-5,
               "perturbation-response-identity")
    hfun = lambda s: h0 + s * v
    report.add("filter-flow-identity", flow_identity_residual(hfun, 0.4),
               0.0, 1e-6, "filter-flow-identity")
    worst = 0.0
    for _ in range(10 if quick else 50):
        hm = random_hermitian(8, rng)
        vm = random_hermitian(8, rng)
        worst = max(worst,
                    np.linalg.norm(belief_propagation_operator(hm, vm), 2)
                    - np.linalg.norm(vm, 2))
    report.add("filter-contraction", worst, 0.0, 1e-9, "filter-contraction")


def _verify_drift(report, rng, n_samples):
    from .qcore import DenseState, random_density_matrix, random_hermitian
    from .lindblad import drift_bound_check

    class _RandomGkls:
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
    for _ in range(n_samples):
        h = random_hermitian(4, rng)
        ls = [0.5 * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
              for _ in range(2)]
        gen = _RandomGkls(h, ls)
        rho = DenseState(random_density_matrix(2, rng), (0, 1))
        t = float(rng.choice([0.5, 1.0, 2.0]))
        lhs, rhs = drift_bound_check(gen, rho, t)
        worst = max(worst, lhs - rhs)
    report.add("steady-drift-bound", worst, 0.0, 1e-8, "steady-drift-bound",
               note=f"{n_samples} samples")


def _verify_disorder(report, rng, quick):
    from .model import ising_chain, tfim_chain
    from .stabilizer import ising_disorder_parameter, symmetric_depolarizer_gap
    fam = ising_chain(5, coupling=0.8, field=0.0, periodic=False)
    val = ising_disorder_parameter(fam, fam.lattice.region([1, 2]))
    report.add("classical-disorder-zero", val, 0.0, 1e-12,
               "flip-disorder-parameter")
    famt = tfim_chain(5, coupling=0.6, g=0.5, periodic=False)
    sizes = (1,) if quick else (1, 2, 3)
    for k in sizes:
        gap, dis = symmetric_depolarizer_gap(
            famt, famt.lattice.region(list(range(k))))
        report.add(f"depolarizer-gap-identity-x{k}", abs(gap - dis), 0.0,
                   1e-9, "sector-depolarizer-identity")


_TASK_FNS = {
    "gibbs": _task_gibbs,
    "cmi": _task_cmi,
    "cluster": _task_cluster,
    "connect": _task_connect,
    "lindblad-flow": _task_lindblad_flow,
    "toric": _task_toric,
    "memory": _task_memory,
    "verify-all": _task_verify_all,
}


def run(config: ExperimentConfig, out_dir=None) -> int:
    """Execute one configured task; write CSVs, summary.json, manifest.json.

    Returns the process exit status: 0 on success, 1 if any audited
    inequality failed, 2 on configuration errors.
    """
    started = time.time()
    out = Path(out_dir or config.output_dir or "glab-out")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    result = _TASK_FNS[config.task](config, rng)
    report, csvs, metrics = result[0], result[1], result[2]
    extra = result[3] if len(result) > 3 else None
    outputs = {}
    for name, payload in csvs.items():
        if payload is None:
            continue
        header, rows = payload
        path = out / name
        write_csv(path, header, rows)
        outputs[name] = file_sha256(path)
    summary = {"task": config.task, "metrics": metrics,
               "report": json.loads(report.to_json())}
    if extra:
        summary["fit"] = extra
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True))
    outputs["summary.json"] = file_sha256(out / "summary.json")
    (out / "manifest.json").write_text(json.dumps(
        manifest(config.to_dict(), outputs, started), indent=2,
        sort_keys=True))
    if not report.all_passed:
        for r in report.failures():
            print(f"FAIL {r.name} [{r.anchor}]: lhs={r.lhs!r} rhs={r.rhs!r} "
                  f"slack={r.slack!r}", file=sys.stderr)
        return 1
    return 0


def sweep(config: ExperimentConfig, axis: str, values, out_dir=None) -> int:
    """One run per axis value; merged metrics CSV with fitted log-trends."""
    out = Path(out_dir or config.output_dir or "glab-sweep")
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    merged = []
    metric_series = {}
    for v in values:
        sub = replace(config, params={**config.params, axis: v},
                      output_dir=None)
        status = run(sub, out_dir=out / f"{axis}-{v}")
        worst = max(worst, status)
        summary = json.loads((out / f"{axis}-{v}" / "summary.json").read_text())
        for name, val in summary["metrics"].items():
            merged.append((v, name, val, status))
            metric_series.setdefault(name, []).append((float(v), float(val)))
    trend_rows = []
    for name, pts in metric_series.items():
        pos = [(x, y) for x, y in pts if y > 0]
        if len({x for x, _ in pos}) >= 3:
            xs = np.array([x for x, _ in pos])
            ys = np.log([y for _, y in pos])
            slope, intercept = np.polyfit(xs, ys, 1)
            trend_rows.append((name, float(slope), float(intercept)))
    write_csv(out / "sweep.csv",
              ("axis_value", "metric", "value", "status"), merged)
    if trend_rows:
        write_csv(out / "trends.csv", ("metric", "log_slope", "intercept"),
                  trend_rows)
    return worst


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="glab",
        description="thermal-state channel-circuit laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_sweep = sub.add_parser("sweep", help="run an experiment per axis value")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True, nargs="+", type=float)
    p_sweep.add_argument("--out", default=None)
    p_ver = sub.add_parser("verify-all", help="run the verification battery")
    p_ver.add_argument("--quick", action="store_true")
    p_ver.add_argument("--out", default=None)
    p_ver.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_file(args.config)
            return run(cfg, out_dir=args.out)
        if args.command == "sweep":
            cfg = ExperimentConfig.from_file(args.config)
            vals = [int(v) if float(v).is_integer() else float(v)
                    for v in args.values]
            return sweep(cfg, args.axis, vals, out_dir=args.out)
        cfg = ExperimentConfig(task="verify-all",
                               params={"quick": bool(args.quick)},
                               seed=args.seed)
        return run(cfg, out_dir=args.out or "glab-verify")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
