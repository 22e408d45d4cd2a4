import numpy as np
import pytest

from gibbslab.lindblad import LocalLindbladian, heatbath_generator
from gibbslab.memory import (
    certify_code,
    fitted_prefactor,
    memory_bound_audit,
    memory_experiment,
    repetition_code,
    toric_code_2x2,
)
from gibbslab.model import ising_chain


class TestCodes:
    def test_repetition_projector(self):
        code = repetition_code(4)
        assert code.rank == 2
        assert code.projector_residual() < 1e-10
        assert set(code.codewords) == {"zero", "one", "plus", "minus"}

    def test_codewords_live_in_code_space(self):
        code = repetition_code(4)
        pi = code.projector
        for w in code.codewords.values():
            assert np.abs(pi @ w.matrix @ pi - w.matrix).max() < 1e-12

    def test_toric_projector_rank(self):
        code = toric_code_2x2()
        assert code.rank == 4
        assert code.projector_residual() < 1e-10


class TestCertification:
    def test_repetition_code_has_single_site_logical(self):
        # the classical repetition code is not a diameter code: one Z
        # distinguishes the codewords, so certification must fail with a
        # single-site witness
        code = repetition_code(3)
        rep = certify_code(code, 2)
        assert not rep.ok
        assert rep.witness_region is not None and len(rep.witness_region) == 1
        assert rep.witness.z.any() and not rep.witness.x.any()
        assert code.certified_diameter is None

    def test_dense_route_agrees(self, rng):
        code = repetition_code(3)
        code.stabilizer = None
        rep = certify_code(code, 2, sample_budget=90, rng=rng)
        assert not rep.ok

    def test_toric_passes_below_logical_diameter(self):
        code = toric_code_2x2()
        rep = certify_code(code, 1)
        assert rep.ok
        assert code.certified_diameter == 1

    def test_toric_fails_at_logical_diameter(self):
        code = toric_code_2x2()
        rep = certify_code(code, 2)
        assert not rep.ok
        assert rep.witness.weight == 2

    def test_full_space_projector_fails(self, rng):
        fam = ising_chain(2, coupling=0.0, field=0.0, periodic=False)
        from gibbslab.memory import QuantumCode
        code = QuantumCode(np.eye(4, dtype=complex), 4, fam)
        rep = certify_code(code, 1, sample_budget=20, rng=rng)
        assert not rep.ok


@pytest.fixture(scope="module")
def rep6_run():
    code = repetition_code(6)
    return memory_experiment(code, 2.0 * code.family.couplings,
                             r_a=1, r1=1, r2=1, delta_cap=0.75)


class TestMemoryRun:
    def test_generator_fixes_target(self, rep6_run):
        assert max(rep6_run.frustration_residuals) < 1e-8

    def test_all_bound_rows_pass(self, rep6_run):
        rows = memory_bound_audit(rep6_run)
        bad = [r for r in rows if not r.passed]
        assert not bad, [(r.name, r.codeword, r.lhs, r.rhs) for r in bad]

    def test_trajectory_bound_at_every_grid_point(self, rep6_run):
        for name, rows in rep6_run.trajectories.items():
            for t, eps_t, bound, _ in rows:
                assert eps_t <= bound + 1e-7

    def test_decode_zero_within_reversal_budget(self, rep6_run):
        for name, audit in rep6_run.lr_audits.items():
            assert rep6_run.eps0[name] <= \
                rep6_run.circuit.n_gates * audit.eps_lr + 1e-8

    def test_classical_sector_is_quiet(self, rep6_run):
        assert rep6_run.drive_norms["zero"] < 0.2
        assert rep6_run.drive_norms["mixed"] < 1e-10

    def test_coherent_sector_decays_fast(self, rep6_run):
        tr = dict((t, e) for t, e, _, _ in rep6_run.trajectories["plus"])
        assert tr[8.0] > 0.9

    def test_prefactor_finite(self, rep6_run):
        assert 0 < fitted_prefactor(rep6_run) < 1e4

    def test_identity_generator_keeps_error_constant(self):
        code = repetition_code(4)
        fam = code.family
        idle = LocalLindbladian([], tuple(range(4)))
        run = memory_experiment(code, 2.0 * fam.couplings, r_a=1, r1=1, r2=1,
                                delta_cap=0.75, generator=idle,
                                time_grid=(0.0, 1.0, 4.0))
        for name, rows in run.trajectories.items():
            eps = [e for _, e, _, _ in rows]
            assert max(eps) - min(eps) < 1e-9

    def test_wrong_steady_state_rejected(self):
        code = repetition_code(4)
        other = ising_chain(4, coupling=0.3, field=0.2, periodic=False)
        gen = heatbath_generator(other)
        with pytest.raises(ValueError):
            memory_experiment(code, 2.0 * code.family.couplings, r_a=1, r1=1,
                              r2=1, generator=gen)

    def test_hot_bath_contrast(self):
        # cold encoder with a hot bath: the encoded state is far from the
        # bath's steady state, so the drive norm jumps and the error grows
        code = repetition_code(6)
        run_cold = memory_experiment(code, 2.0 * code.family.couplings,
                                     r_a=1, r1=1, r2=1,
                                     time_grid=(0.0, 2.0))
        hot_gen = heatbath_generator(
            code.family.with_couplings(0.0 * code.family.couplings))
        run_hot = memory_experiment(code, 2.0 * code.family.couplings,
                                    r_a=1, r1=1, r2=1, generator=hot_gen,
                                    time_grid=(0.0, 2.0),
                                    enforce_frustration_free=False)
        assert run_hot.drive_norms["zero"] > 10 * run_cold.drive_norms["zero"]
        cold_end = run_cold.trajectories["zero"][-1][1]
        hot_end = run_hot.trajectories["zero"][-1][1]
        assert hot_end > cold_end
        for name, rows in run_hot.trajectories.items():
            for t, eps_t, bound, _ in rows:
                assert eps_t <= bound + 1e-7
