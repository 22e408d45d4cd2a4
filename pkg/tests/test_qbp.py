import numpy as np
import pytest

from gibbslab.model import annulus_partition, ising_chain, tfim_chain
from gibbslab.qbp import (
    DEFAULT_FILTER,
    belief_propagation_operator,
    default_lr_velocity,
    flow_identity_residual,
    localize_operator,
    response_bound_check,
    response_identity_check,
)
from gibbslab.qcore import PAULI, embed_operator, random_hermitian


class TestFilter:
    def test_unit_at_zero(self):
        assert DEFAULT_FILTER(0.0) == 1.0

    def test_even_and_bounded(self):
        w = np.linspace(-20, 20, 401)
        vals = DEFAULT_FILTER(w)
        assert np.abs(vals - DEFAULT_FILTER(-w)).max() < 1e-15
        assert vals.max() <= 1.0 + 1e-15

    def test_commuting_input_fixed(self, rng):
        h = np.diag(rng.normal(size=8))
        v = np.diag(rng.normal(size=8)).astype(complex)
        out = belief_propagation_operator(h, v)
        assert np.abs(out - v).max() < 1e-10

    def test_operator_norm_contraction(self, rng):
        for _ in range(50):
            h = random_hermitian(8, rng)
            v = random_hermitian(8, rng)
            out = belief_propagation_operator(h, v)
            assert np.linalg.norm(out, 2) <= np.linalg.norm(v, 2) + 1e-10

    def test_adjoint_preserving(self, rng):
        h = random_hermitian(8, rng)
        g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        out = belief_propagation_operator(h, g)
        out_dag = belief_propagation_operator(h, g.conj().T)
        assert np.abs(out.conj().T - out_dag).max() < 1e-10

    def test_flow_identity_anchor(self):
        fam = tfim_chain(3, coupling=0.7, g=0.5, periodic=False)
        h0 = fam.hamiltonian()
        v = 0.4 * embed_operator(PAULI["Z"], (0,), (0, 1, 2))
        resid = flow_identity_residual(lambda s: h0 + s * v, 0.3)
        assert resid < 1e-6


class TestResponseIdentity:
    def test_zero_perturbation(self):
        fam = tfim_chain(3, coupling=0.5, g=0.4, periodic=False)
        h0 = fam.hamiltonian()
        obs = embed_operator(PAULI["Z"], (2,), (0, 1, 2))
        rep = response_identity_check(h0, 0.0 * h0, obs, n_nodes=8)
        assert abs(rep.lhs) < 1e-12
        assert abs(rep.rhs) < 1e-12

    def test_tfim_chain_identity(self):
        fam = tfim_chain(4, coupling=0.6, g=0.5, periodic=False)
        h0 = fam.hamiltonian()
        sites = tuple(range(4))
        v = 0.3 * embed_operator(PAULI["Z"], (0,), sites)
        obs = embed_operator(PAULI["Z"], (3,), sites)
        rep = response_identity_check(h0, v, obs, n_nodes=64)
        assert rep.residual < 1e-5
        assert rep.converged


class TestLocalization:
    def test_truncation_residual_decays(self):
        fam = tfim_chain(6, coupling=0.6, g=0.5, periodic=False)
        h = fam.hamiltonian()
        sites = tuple(range(6))
        v = embed_operator(PAULI["Z"], (0,), sites)
        phi = belief_propagation_operator(h, v)
        resids = []
        for l in (1, 2, 3, 4):
            region = fam.lattice.ball(0, l).sorted_sites()
            loc = localize_operator(phi, sites, sites, region)
            resids.append(np.linalg.norm(phi - loc, 2))
        assert all(a >= b - 1e-12 for a, b in zip(resids, resids[1:]))
        slope = np.polyfit(range(1, 5), np.log(np.array(resids) + 1e-300), 1)[0]
        assert slope < 0


class TestResponseBound:
    def test_zero_perturbation_trivial(self, rng):
        fam = ising_chain(8, coupling=0.4, field=0.2)
        part = annulus_partition(fam.lattice, 0, 0, 2, 1)
        rep = response_bound_check(fam, (PAULI["Z"], (0,), 0.0), part, l=1,
                                   n_s_nodes=2, rng=rng)
        assert rep.lhs < 1e-12

    def test_field_bump_bounded(self, rng):
        fam = ising_chain(8, coupling=0.4, field=0.2)
        part = annulus_partition(fam.lattice, 0, 0, 2, 1)
        rep = response_bound_check(fam, (PAULI["Z"], (0,), 0.3), part, l=2,
                                   n_s_nodes=4, rng=rng)
        assert rep.lhs <= rep.rhs_upper_cov + 1e-9
        assert rep.velocity > 0

    def test_response_decays_with_separation(self, rng):
        fam = ising_chain(10, coupling=0.4, field=0.2)
        lhs_values = []
        for w1 in (1, 2, 3):
            part = annulus_partition(fam.lattice, 0, 0, w1, 1)
            rep = response_bound_check(fam, (PAULI["Z"], (0,), 0.3), part,
                                       l=w1, n_s_nodes=2, rng=rng)
            lhs_values.append((part.separation(), rep.lhs))
        seps = np.array([s for s, _ in lhs_values], float)
        vals = np.array([v for _, v in lhs_values])
        slope = np.polyfit(seps, np.log(vals + 1e-300), 1)[0]
        assert slope < 0

    def test_perturbation_must_stay_inside(self, rng):
        fam = ising_chain(8, coupling=0.4, field=0.2)
        part = annulus_partition(fam.lattice, 0, 0, 2, 1)
        with pytest.raises(ValueError):
            response_bound_check(fam, (PAULI["Z"], (4,), 0.3), part, l=1,
                                 rng=rng)

    def test_velocity_default_positive(self):
        fam = tfim_chain(5, coupling=0.5, g=0.5)
        assert default_lr_velocity(fam) > 0
