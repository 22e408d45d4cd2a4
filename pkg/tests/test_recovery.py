import numpy as np
import pytest

from gibbslab.model import annulus_partition, gibbs_state, ising_chain
from gibbslab.qcore import (
    DenseState,
    cmi,
    fidelity,
    random_density_matrix,
    trace_distance,
)
from gibbslab.recovery import (
    ConditioningWarning,
    QuadratureSpec,
    beta0,
    petz_recovery,
    twirled_recovery,
)


class TestWeightDensity:
    def test_value_at_zero(self):
        assert abs(beta0(0.0) - np.pi / 4) < 1e-12

    def test_even(self):
        for t in (0.5, 1.0, 2.0):
            assert beta0(t) == beta0(-t)

    def test_quadrature_normalization_401_nodes(self):
        t = np.linspace(-12, 12, 401)
        w = beta0(t) * (t[1] - t[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        assert abs(w.sum() - 1.0) < 1e-8

    def test_truncation_mass_estimate(self):
        q = QuadratureSpec(window=12.0, n_nodes=241)
        assert q.truncation_mass() < 1e-15
        assert abs(q.raw_mass() - 1.0) < 1e-8


class TestPlainRecovery:
    def test_product_reference_reappends_marginal(self, rng):
        a = random_density_matrix(1, rng)
        bc = random_density_matrix(2, rng)
        st = DenseState(np.kron(a, bc), (0, 1, 2))
        rm = petz_recovery(st, support=(0, 1), erase_labels=(0,))
        out = rm.apply(st)
        assert trace_distance(out.matrix, st.matrix) < 1e-9

    def test_commuting_chain_exact(self, chain8, chain8_state):
        part = annulus_partition(chain8.lattice, 0, 1, 1, 1)
        a = part.a.sorted_sites()
        ab = tuple(sorted(part.a.sites | part.b.sites))
        assert cmi(chain8_state, a, part.b.sorted_sites(),
                   part.c.sorted_sites()) < 1e-9
        rm = petz_recovery(chain8_state, support=ab, erase_labels=a)
        out = rm.apply(chain8_state)
        assert trace_distance(out.matrix, chain8_state.matrix) < 1e-8

    def test_trace_bound_on_random_states(self, rng):
        for _ in range(40):
            m = random_density_matrix(3, rng)
            st = DenseState(m, (0, 1, 2))
            rm = twirled_recovery(st, support=(1, 2), erase_labels=(2,))
            lhs = trace_distance(rm.apply(st).matrix, m)
            rhs = np.sqrt(4 * np.log(2) * cmi(st, (0,), (1,), (2,)))
            assert lhs <= rhs + 1e-8


class TestTwirledRecovery:
    def test_single_node_equals_plain(self, rng):
        st = DenseState(random_density_matrix(3, rng), (0, 1, 2))
        plain = petz_recovery(st, support=(0, 1, 2), erase_labels=(0,))
        single = twirled_recovery(st, support=(0, 1, 2), erase_labels=(0,),
                                  quadrature=QuadratureSpec.single_node())
        s1 = plain.gate.superoperator(max_sites=3)
        s2 = single.gate.superoperator(max_sites=3)
        assert np.abs(s1 - s2).max() < 1e-12

    def test_zero_cmi_exact_for_any_quadrature(self, rng):
        a = random_density_matrix(1, rng)
        bc = random_density_matrix(2, rng)
        st = DenseState(np.kron(a, bc), (0, 1, 2))
        for quad in (QuadratureSpec(window=6.0, n_nodes=31),
                     QuadratureSpec()):
            rm = twirled_recovery(st, support=(0, 1), erase_labels=(0,),
                                  quadrature=quad)
            assert trace_distance(rm.apply(st).matrix, st.matrix) < 1e-9

    def test_fidelity_bound(self, rng):
        worst = -np.inf
        for _ in range(60):
            m = random_density_matrix(3, rng)
            st = DenseState(m, (0, 1, 2))
            i_val = cmi(st, (0,), (1,), (2,))
            rm = twirled_recovery(st, support=(1, 2), erase_labels=(2,))
            f = fidelity(m, rm.apply(st).matrix)
            worst = max(worst, -2 * np.log2(max(f, 1e-300)) - i_val)
        assert worst <= 1e-6

    def test_quadrature_doubling_stability(self, rng):
        st = DenseState(random_density_matrix(3, rng), (0, 1, 2))
        s1 = twirled_recovery(st, (0, 1, 2), (0,),
                              quadrature=QuadratureSpec()).gate \
            .superoperator(max_sites=3)
        s2 = twirled_recovery(st, (0, 1, 2), (0,),
                              quadrature=QuadratureSpec(n_nodes=481)).gate \
            .superoperator(max_sites=3)
        assert np.abs(s1 - s2).max() < 1e-6

    def test_cp_tp_certification(self, rng):
        st = DenseState(random_density_matrix(3, rng), (0, 1, 2))
        twirled_recovery(st, (0, 1, 2), (1,)).gate.certify(atol=1e-8,
                                                           max_sites=3)

    def test_kernel_path_matches_node_path(self, rng):
        from gibbslab.qcore import partial_trace
        from gibbslab.recovery import PetzResampleGate
        fam = ising_chain(5, coupling=0.8, field=0.3, periodic=False)
        rho = gibbs_state(fam)
        ref = partial_trace(rho.matrix, rho.labels, (0, 1, 2, 3))
        fast_gate = PetzResampleGate(ref, (0, 1, 2, 3), (1, 2))
        slow_gate = PetzResampleGate(ref, (0, 1, 2, 3), (1, 2),
                                     force_node_path=True)
        assert fast_gate._diagonal and not slow_gate._diagonal
        x = random_density_matrix(5, rng)
        fast = fast_gate.apply_local(x, rho.labels)
        slow = slow_gate.apply_local(x, rho.labels)
        assert np.abs(fast - slow).max() < 1e-10

    def test_adjoint_pairing(self, rng):
        st = DenseState(random_density_matrix(3, rng), (0, 1, 2))
        gate = twirled_recovery(st, (0, 1), (0,)).gate
        x = random_density_matrix(3, rng)
        g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        y = 0.5 * (g + g.conj().T)
        lhs = np.vdot(y, gate.apply_local(x, (0, 1, 2)))
        rhs = np.vdot(gate.apply_local_adjoint(y, (0, 1, 2)), x)
        assert abs(lhs - rhs) < 1e-10

    def test_conditioning_warning_on_singular_marginal(self):
        v = np.zeros(4)
        v[0] = 1.0
        pure = np.outer(v, v)
        st = DenseState(pure, (0, 1))
        with pytest.warns(ConditioningWarning):
            rm = twirled_recovery(st, support=(0, 1), erase_labels=(0,))
        assert rm.conditioning_warning

    def test_serialization_fields(self, rng):
        st = DenseState(random_density_matrix(2, rng), (0, 1))
        rm = twirled_recovery(st, (0, 1), (0,))
        d = rm.serialize()
        assert set(d) == {"reference_hash", "reference_labels", "erase_labels",
                          "quadrature", "truncation_mass",
                          "conditioning_warning"}
        assert d["quadrature"]["n_nodes"] == 241
