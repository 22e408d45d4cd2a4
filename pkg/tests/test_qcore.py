import numpy as np
import pytest

from gibbslab.qcore import (
    PAULI,
    DenseState,
    LabelError,
    NumericalIntegrityError,
    PartitionError,
    apply_gate,
    choi_of_superoperator,
    cmi,
    depolarizing_gate,
    embed_operator,
    entropy,
    fidelity,
    identity_gate,
    induced_trace_norm_lb,
    is_completely_positive,
    is_trace_preserving,
    load_operator,
    matrix_function,
    partial_trace,
    random_density_matrix,
    reset_gate,
    save_operator,
    trace_distance,
    trace_norm,
    trace_norm_variational_lb,
    unvec,
    vec,
)


def bell_state():
    v = np.zeros(4)
    v[0] = v[3] = 1 / np.sqrt(2)
    return DenseState(np.outer(v, v), (0, 1))


def ghz_state(n=3):
    d = 2 ** n
    v = np.zeros(d)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return DenseState(np.outer(v, v), tuple(range(n)))


class TestPartialTrace:
    def test_bell_marginal_is_maximally_mixed(self):
        m = partial_trace(bell_state().matrix, (0, 1), (0,))
        assert np.allclose(m, np.eye(2) / 2)

    def test_product_state_marginal(self, rng):
        a = random_density_matrix(1, rng)
        b = random_density_matrix(2, rng)
        m = partial_trace(np.kron(a, b), (0, 1, 2), (0,))
        assert np.abs(m - a).max() < 1e-12

    def test_ghz_two_site_marginal(self):
        m = partial_trace(ghz_state().matrix, (0, 1, 2), (0, 1))
        want = np.zeros((4, 4))
        want[0, 0] = want[3, 3] = 0.5
        assert np.abs(m - want).max() < 1e-12

    def test_unknown_label_raises(self):
        with pytest.raises(LabelError):
            partial_trace(np.eye(4) / 4, (0, 1), (0, 7))

    def test_trace_preserved(self, rng):
        m = random_density_matrix(3, rng)
        out = partial_trace(m, (0, 1, 2), (1, 2))
        assert abs(np.trace(out) - np.trace(m)) < 1e-12


class TestMatrixFunction:
    def test_exp_of_diagonal(self):
        out = matrix_function(np.diag([0.0, np.log(2)]), "exp")
        assert np.allclose(out, np.diag([1.0, 2.0]))

    def test_pseudo_inverse_power(self):
        out = matrix_function(np.diag([4.0, 0.0]), "power", p=-0.5)
        assert np.allclose(out, np.diag([0.5, 0.0]))

    def test_sqrt_squares_back(self, rng):
        rho = random_density_matrix(2, rng)
        root = matrix_function(rho, "power", p=0.5)
        assert np.abs(root @ root - rho).max() < 1e-10

    def test_log_requires_hermitian(self):
        with pytest.raises(ValueError):
            matrix_function(np.array([[0, 1], [0, 0]], complex), "log")


class TestNormsAndFidelity:
    def test_trace_norm_diagonal(self):
        assert abs(trace_norm(np.diag([0.5, -0.5])) - 1.0) < 1e-12

    def test_trace_norm_zero(self, rng):
        rho = random_density_matrix(2, rng)
        assert trace_norm(rho - rho) == 0.0

    def test_projector_distance_sqrt2(self):
        zero = np.diag([1.0, 0.0])
        plus = np.full((2, 2), 0.5)
        assert abs(trace_distance(zero, plus) - np.sqrt(2)) < 1e-12

    def test_variational_lower_bound(self, rng):
        m = random_density_matrix(2, rng) - random_density_matrix(2, rng)
        lb = trace_norm_variational_lb(m, rng=rng)
        assert lb <= trace_norm(m) + 1e-10
        assert lb >= trace_norm(m) - 1e-8  # Hermitian case is tight

    def test_fidelity_self(self, rng):
        rho = random_density_matrix(2, rng)
        assert abs(fidelity(rho, rho) - 1.0) < 1e-10

    def test_fidelity_orthogonal(self):
        assert fidelity(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) < 1e-12

    def test_fidelity_pure_overlap(self):
        plus = np.full((2, 2), 0.5)
        assert abs(fidelity(np.diag([1.0, 0.0]), plus) - 1 / np.sqrt(2)) < 1e-12

    def test_fuchs_van_de_graaf_both_directions(self, rng):
        for _ in range(25):
            r, s = random_density_matrix(2, rng), random_density_matrix(2, rng)
            f = fidelity(r, s)
            td = trace_distance(r, s)
            assert 1 - f <= 0.5 * td + 1e-9
            assert 0.5 * td <= np.sqrt(max(1 - f * f, 0.0)) + 1e-9


class TestEntropyAndCmi:
    def test_entropy_additive_on_products(self, rng):
        a = random_density_matrix(1, rng)
        b = random_density_matrix(2, rng)
        assert abs(entropy(np.kron(a, b)) - entropy(a) - entropy(b)) < 1e-9

    def test_product_state_cmi_zero(self, rng):
        m = np.kron(np.kron(random_density_matrix(1, rng),
                            random_density_matrix(1, rng)),
                    random_density_matrix(1, rng))
        st = DenseState(m, (0, 1, 2))
        assert cmi(st, (0,), (1,), (2,)) < 1e-10

    def test_ghz_cmi_is_one(self):
        assert abs(cmi(ghz_state(), (0,), (1,), (2,)) - 1.0) < 1e-9

    def test_overlapping_regions_raise(self):
        with pytest.raises(PartitionError):
            cmi(ghz_state(), (0, 1), (1,), (2,))

    def test_cmi_nonnegative_on_random_states(self, rng):
        for _ in range(25):
            st = DenseState(random_density_matrix(3, rng), (0, 1, 2))
            assert cmi(st, (0,), (1,), (2,)) >= 0.0


class TestGates:
    def test_identity_gate_is_identity(self, rng):
        st = DenseState(random_density_matrix(2, rng), (0, 1))
        out = apply_gate(st, identity_gate((0,)))
        assert np.abs(out.matrix - st.matrix).max() < 1e-12

    def test_full_depolarizer(self, rng):
        st = DenseState(random_density_matrix(2, rng), (0, 1))
        out = apply_gate(st, depolarizing_gate((0, 1)))
        assert np.abs(out.matrix - np.eye(4) / 4).max() < 1e-12

    def test_reset_on_bell(self):
        out = apply_gate(bell_state(), reset_gate(0))
        want = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2)
        assert np.abs(out.matrix - want).max() < 1e-12

    def test_builtin_gates_cp_tp(self):
        for gate in (identity_gate((0,)), depolarizing_gate((0, 1)),
                     reset_gate(0)):
            gate.certify(atol=1e-8)

    def test_gate_support_embedding_order(self, rng):
        # applying on labels (1, 0) must respect the permuted ordering
        st = DenseState(random_density_matrix(2, rng), (1, 0))
        out = apply_gate(st, reset_gate(0))
        marg = partial_trace(out.matrix, (1, 0), (0,))
        assert np.abs(marg - np.diag([1.0, 0.0])).max() < 1e-10

    def test_choi_tp_checks(self):
        g = depolarizing_gate((0,))
        assert is_completely_positive(g.smatrix)
        assert is_trace_preserving(g.smatrix)
        j = choi_of_superoperator(g.smatrix)
        assert abs(np.trace(j) - 2.0) < 1e-10

    def test_monotonicity_under_channels(self, rng):
        for gate in (depolarizing_gate((0,)), reset_gate(1)):
            for _ in range(10):
                a = DenseState(random_density_matrix(2, rng), (0, 1))
                b = DenseState(random_density_matrix(2, rng), (0, 1))
                da = trace_distance(apply_gate(a, gate).matrix,
                                    apply_gate(b, gate).matrix)
                db = trace_distance(a.matrix, b.matrix)
                assert da <= db + 1e-9


class TestInducedNorm:
    def test_identity_channel(self, rng):
        val = induced_trace_norm_lb(lambda m: m, 4, rng=rng)
        assert val >= 1 - 1e-9

    def test_depolarizer_minus_identity(self, rng):
        def diff(m):
            return np.trace(m) * np.eye(2) / 2 - m
        val = induced_trace_norm_lb(diff, 2, rng=rng)
        assert val >= 1.0 - 1e-9

    def test_zero_map(self, rng):
        val = induced_trace_norm_lb(lambda m: 0.0 * m, 2, rng=rng)
        assert val == 0.0


class TestVectorization:
    def test_column_stacking_pairing(self, rng):
        a = random_density_matrix(1, rng)
        b = random_density_matrix(1, rng)
        assert abs(np.vdot(vec(a), vec(b)) - np.trace(a.conj().T @ b)) < 1e-12

    def test_unvec_roundtrip(self, rng):
        m = random_density_matrix(2, rng)
        assert np.abs(unvec(vec(m)) - m).max() < 1e-15


class TestStateCertification:
    def test_non_hermitian_rejected(self):
        with pytest.raises(NumericalIntegrityError):
            DenseState(np.array([[0.5, 0.1], [0.3, 0.5]], complex), (0,))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NumericalIntegrityError):
            DenseState(np.diag([1.2, -0.2]), (0,))


class TestSerialization:
    def test_roundtrip(self, tmp_path, rng):
        m = random_density_matrix(2, rng)
        path = tmp_path / "op.glab"
        save_operator(path, m, (3, 5))
        loaded, labels = load_operator(path)
        assert labels == (3, 5)
        assert np.abs(loaded - m).max() == 0.0


def test_embed_operator_matches_kron_on_sorted_labels():
    z0 = embed_operator(PAULI["Z"], (0,), (0, 1))
    assert np.allclose(z0, np.kron(PAULI["Z"], np.eye(2)))
    z1 = embed_operator(PAULI["Z"], (1,), (0, 1))
    assert np.allclose(z1, np.kron(np.eye(2), PAULI["Z"]))
