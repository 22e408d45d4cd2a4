import numpy as np
import pytest

from gibbslab.lindblad import (
    commuting_flow_generator,
    drift_bound_check,
    exp_apply,
    flow_integrate,
    flow_residual_check,
    heatbath_generator,
    thermal_derivative,
)
from gibbslab.model import gibbs_state, ising_chain, tfim_chain
from gibbslab.qcore import (
    DenseState,
    PAULI,
    embed_operator,
    is_completely_positive,
    is_trace_preserving,
    random_density_matrix,
    superoperator_of,
)


@pytest.fixture(scope="module")
def chain6():
    return ising_chain(6, coupling=1.0, field=0.3, periodic=False)


def _linear_path(fam, b0, b1):
    base = fam.couplings
    return lambda s: base * (b0 + (b1 - b0) * s)


class TestFlowGenerator:
    def test_constant_path_gives_empty_generator(self, chain6):
        gen = commuting_flow_generator(chain6, lambda s: chain6.couplings,
                                       0.5, 1)
        assert len(gen.terms) == 0

    def test_noncommuting_rejected(self):
        fam = tfim_chain(4, coupling=0.5, g=0.5)
        with pytest.raises(ValueError):
            commuting_flow_generator(fam, _linear_path(fam, 0.2, 0.4), 0.5, 1)

    def test_path_speed_cap(self, chain6):
        with pytest.raises(ValueError):
            commuting_flow_generator(chain6, _linear_path(chain6, 0.0, 3.0),
                                     0.5, 1)

    def test_terms_are_valid_lindbladians(self, chain6):
        gen = commuting_flow_generator(chain6, _linear_path(chain6, 0.2, 0.5),
                                       0.4, 1)
        term = gen.terms[0]
        labels = term.support
        dim = 2 ** len(labels)
        for tau in (0.1, 1.0):
            class _One:
                terms = [term]

                @staticmethod
                def apply(m):
                    return term.apply(m, labels)

                @staticmethod
                def norm_estimate():
                    return 2 * abs(term.prefactor)
            s = superoperator_of(lambda m: exp_apply(_One, m, tau), dim)
            assert is_completely_positive(s, atol=1e-7)
            assert is_trace_preserving(s, atol=1e-7)

    def test_term_norm_lower_bounds_capped(self, chain6, rng):
        gen = commuting_flow_generator(chain6, _linear_path(chain6, 0.2, 0.5),
                                       0.4, 1)
        for term in gen.terms[:3]:
            lb = term.norm_lower_bound(rng=rng)
            assert lb <= 4.0 + 1e-6


class TestThermalDerivative:
    def test_finite_difference_matches_expansion(self, chain6):
        deriv, richardson, analytic = thermal_derivative(
            chain6, _linear_path(chain6, 0.2, 0.5), 0.3)
        assert analytic is not None
        assert np.abs(deriv - analytic).max() < 1e-7
        assert richardson < 1e-6


class TestResidualChain:
    def test_measured_chain_holds_pointwise(self, chain6, rng):
        path = _linear_path(chain6, 0.2, 0.5)
        for s in (0.1, 0.5, 0.9):
            rep = flow_residual_check(chain6, path, s, 1, rng=rng)
            assert rep.lhs <= rep.sum_markov_measured + 1e-9
            assert rep.sum_markov_measured <= rep.sum_onesided_exact + 1e-9
            assert rep.derivative_cross_check < 1e-7

    def test_exact_markov_radius(self, chain6, rng):
        rep = flow_residual_check(chain6, _linear_path(chain6, 0.2, 0.5),
                                  0.5, chain6.interaction_range, rng=rng)
        assert rep.lhs <= rep.sum_onesided_exact + 1e-7


class TestFlowIntegration:
    def test_zero_generator_returns_input(self, chain6):
        rho0 = gibbs_state(chain6)
        out = flow_integrate(
            lambda s: commuting_flow_generator(chain6,
                                               lambda _s: chain6.couplings,
                                               s, 1),
            rho0, n_steps=4, target=rho0)
        assert out.error_vs_target < 1e-12

    def test_error_decreases_with_radius(self, chain6):
        path = _linear_path(chain6, 0.25, 0.45)
        rho0 = gibbs_state(chain6.with_couplings(path(0.0)))
        rho1 = gibbs_state(chain6.with_couplings(path(1.0)))
        errs = []
        for r in (0, 1):
            out = flow_integrate(
                lambda s, rr=r: commuting_flow_generator(chain6, path, s, rr),
                rho0, n_steps=32, target=rho1)
            errs.append(out.error_vs_target)
        assert errs[1] < errs[0]

    def test_error_decay_fit_in_radius(self, chain6):
        path = _linear_path(chain6, 0.25, 0.45)
        rho0 = gibbs_state(chain6.with_couplings(path(0.0)))
        rho1 = gibbs_state(chain6.with_couplings(path(1.0)))
        errs = []
        for r in (0, 1, 2):
            out = flow_integrate(
                lambda s, rr=r: commuting_flow_generator(chain6, path, s, rr),
                rho0, n_steps=32, target=rho1)
            errs.append((r, out.error_vs_target))
        xs = np.array([r for r, _ in errs], float)
        ys = np.log([e for _, e in errs])
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(((ys - pred) ** 2).sum())
        ss_tot = float(((ys - ys.mean()) ** 2).sum())
        assert slope < 0
        assert 1 - ss_res / ss_tot > 0.8

    def test_step_halving_convergence(self, chain6):
        path = _linear_path(chain6, 0.25, 0.4)
        rho0 = gibbs_state(chain6.with_couplings(path(0.0)))
        out = flow_integrate(
            lambda s: commuting_flow_generator(chain6, path, s, 1),
            rho0, n_steps=64, check_halving=True)
        assert out.converged
        assert out.halving_gap < 1e-5


class TestHeatbath:
    def test_stationarity_every_term(self, chain6):
        rho = gibbs_state(chain6)
        gen = heatbath_generator(chain6)
        assert max(gen.frustration_residuals(rho)) < 1e-9

    def test_infinite_temperature_depolarizes(self):
        fam = ising_chain(3, coupling=0.0, field=0.0, periodic=False)
        gen = heatbath_generator(fam)
        rho = DenseState(random_density_matrix(3, 3), (0, 1, 2))
        out = exp_apply(gen, rho.matrix, 40.0)
        assert np.abs(out - np.eye(8) / 8).max() < 1e-4

    def test_long_time_convergence_to_thermal(self, chain6):
        # the low-temperature chain mixes slowly; the horizon must clear it
        rho_t = gibbs_state(chain6)
        gen = heatbath_generator(chain6)
        v = np.zeros(64)
        v[5] = 1.0
        product = DenseState(np.diag(v).astype(complex), tuple(range(6)))
        out = exp_apply(gen, product.matrix, 180.0)
        obs = embed_operator(PAULI["Z"], (2,), tuple(range(6)))
        got = np.real(np.trace(obs @ out))
        want = np.real(np.trace(obs @ rho_t.matrix))
        assert abs(got - want) < 1e-4

    def test_norm_cap_is_one(self, chain6, rng):
        gen = heatbath_generator(chain6)
        lb = gen.terms[2].norm_lower_bound(rng=rng)
        assert lb <= 1.0 + 1e-6

    def test_noncommuting_rejected(self):
        fam = tfim_chain(4, coupling=0.5, g=0.5)
        with pytest.raises(ValueError):
            heatbath_generator(fam)


class TestDriftBound:
    def test_zero_time(self, chain6):
        gen = heatbath_generator(chain6)
        rho = gibbs_state(chain6)
        lhs, rhs = drift_bound_check(gen, rho, 0.0)
        assert lhs == 0.0 and rhs == 0.0

    def test_steady_state(self, chain6):
        gen = heatbath_generator(chain6)
        rho = gibbs_state(chain6)
        lhs, rhs = drift_bound_check(gen, rho, 2.0)
        assert lhs < 1e-9
        assert rhs < 2e-9 * 2.0 + 1e-12

    def test_negative_time_rejected(self, chain6):
        gen = heatbath_generator(chain6)
        with pytest.raises(ValueError):
            drift_bound_check(gen, gibbs_state(chain6), -1.0)
