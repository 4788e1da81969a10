import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metrosym.errors import (
    DegenerateGroundStateError,
    DimensionMismatchError,
    HermiticityError,
)
from metrosym.models import (
    ModelKind,
    ModelSpec,
    ParameterPoint,
    build_hamiltonian,
    trimer_multiplet_energies,
    xy_ring_dispersion,
    xy_ring_ground_state_momentum,
)
from metrosym.operators import (
    DensityMatrix,
    HermitianOperator,
    eig_hermitian,
    ground_state,
    partial_trace,
    tensor_product,
    thermal_state,
    trace_distance,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def hermitian(entries):
    return HermitianOperator(np.asarray(entries, dtype=complex))


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianOperator(0.5 * (a + a.conj().T))


def random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho))


class TestTypes:
    def test_hermitian_symmetrizes_small_drift(self):
        mat = np.array([[1.0, 0.5 + 1e-14j], [0.5 - 0.9e-14j, 2.0]])
        op = HermitianOperator(mat)
        assert np.allclose(op.matrix, op.matrix.conj().T)

    def test_hermitian_rejects_large_violation(self):
        with pytest.raises(HermiticityError):
            HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_density_trace_enforced(self):
        with pytest.raises(DimensionMismatchError):
            DensityMatrix(np.eye(2))

    def test_density_negative_eigenvalue_rejected(self):
        with pytest.raises(HermiticityError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_matrices_read_only(self):
        op = hermitian(np.eye(2))
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 5.0


class TestTensorProduct:
    def test_identity_times_identity(self):
        out = tensor_product(hermitian(I2), hermitian(I2))
        assert np.array_equal(out.matrix, np.eye(4))

    def test_sz_times_identity(self):
        out = tensor_product(hermitian(SZ), hermitian(I2))
        assert np.allclose(out.matrix, np.diag([1, 1, -1, -1]))

    def test_sx_sx_flips_both_spins(self):
        out = tensor_product(hermitian(SX), hermitian(SX))
        basis_00 = np.array([1, 0, 0, 0], dtype=complex)
        basis_11 = np.array([0, 0, 0, 1], dtype=complex)
        assert np.allclose(out.matrix @ basis_00, basis_11)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_associative(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_hermitian(rng, 2) for _ in range(3))
        left = tensor_product(tensor_product(a, b), c)
        right = tensor_product(a, tensor_product(b, c))
        scale = max(1.0, np.max(np.abs(left.matrix)))
        assert np.max(np.abs(left.matrix - right.matrix)) <= 1e-14 * scale


class TestPartialTrace:
    def test_maximally_mixed(self):
        rho = DensityMatrix(np.eye(4) / 4)
        out = partial_trace(rho, [2, 2], {0})
        assert np.allclose(out.matrix, np.eye(2) / 2, atol=1e-12)

    def test_bell_state(self):
        psi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
        rho = DensityMatrix(np.outer(psi, psi.conj()))
        out = partial_trace(rho, [2, 2], {0})
        assert np.allclose(out.matrix, np.eye(2) / 2, atol=1e-12)

    def test_trimer_reduced_state_is_singlet_triplet_diagonal(self):
        spec = ModelSpec(ModelKind.HEISENBERG_TRIMER, 3, {"J": 1.0, "K": 0.5}, ("T",))
        ham = build_hamiltonian(spec, ParameterPoint((1.0,)))
        rho = thermal_state(ham, 1.0)
        reduced = partial_trace(rho, [2, 2, 2], {0, 1})
        # independent Boltzmann arithmetic for the expected triplet weight
        energies = np.array([e for _l, e, _g in trimer_multiplet_energies(1.0, 0.5)])
        degeneracy = np.array([2.0, 2.0, 4.0])
        w = np.exp(-energies / 1.0)
        probs = w / (degeneracy @ w)
        p_triplet = (2 / 3) * probs[1] + (4 / 3) * probs[2]
        p_singlet = 2 * probs[0]
        singlet = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
        rot = np.array(
            [singlet, [1, 0, 0, 0], np.array([0, 1, 1, 0]) / np.sqrt(2), [0, 0, 0, 1]],
            dtype=complex,
        ).T
        in_basis = rot.conj().T @ reduced.matrix @ rot
        off = in_basis - np.diag(np.diag(in_basis))
        assert np.max(np.abs(off)) < 1e-12
        assert np.allclose(np.diag(in_basis).real, [p_singlet, p_triplet, p_triplet, p_triplet], atol=1e-12)

    def test_trace_over_all_sites_is_unity(self):
        rng = np.random.default_rng(3)
        rho = random_density(rng, 8)
        out = partial_trace(rho, [2, 2, 2], {0, 1, 2})
        assert out.matrix.shape == (8, 8)
        scalar = partial_trace(rho, [8], {0})
        assert scalar.dim == 8
        # tracing to a single kept site leaves a unit-trace state
        site = partial_trace(rho, [2, 2, 2], {1})
        assert abs(np.trace(site.matrix) - 1.0) < 1e-12

    def test_dimension_mismatch(self):
        rho = DensityMatrix(np.eye(4) / 4)
        with pytest.raises(DimensionMismatchError):
            partial_trace(rho, [2, 3], {0})
        with pytest.raises(DimensionMismatchError):
            partial_trace(rho, [2, 2], set())
        with pytest.raises(DimensionMismatchError):
            partial_trace(rho, [2, 2], {5})

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_trace_preserved(self, seed):
        rng = np.random.default_rng(seed)
        rho = random_density(rng, 8)
        out = partial_trace(rho, [2, 2, 2], {0, 2})
        assert abs(np.trace(out.matrix) - 1.0) < 1e-12


class TestEig:
    def test_diagonal_sorted(self):
        system = eig_hermitian(hermitian(np.diag([3.0, 1.0, 2.0])))
        assert np.allclose(system.values, [1.0, 2.0, 3.0])
        assert np.allclose(np.abs(system.vectors), np.eye(3)[:, [1, 2, 0]])

    def test_sx_phase_convention(self):
        system = eig_hermitian(hermitian(SX))
        assert np.allclose(system.values, [-1.0, 1.0])
        minus = system.vectors[:, 0]
        plus = system.vectors[:, 1]
        s = 1 / np.sqrt(2)
        assert np.allclose(minus, [s, -s]) or np.allclose(minus, [-s, s]) is False
        assert np.allclose(plus, [s, s])

    def test_xy_ring_ground_energy_matches_dispersion(self):
        spec = ModelSpec(ModelKind.XY_RING, 4, {"h": 1.0}, ("lambda", "gamma"))
        ham = build_hamiltonian(spec, ParameterPoint((0.5, 0.6)))
        system = eig_hermitian(ham)
        expected = -sum(eps for _k, eps in xy_ring_dispersion(4, 0.5, 0.6, 1.0))
        assert abs(system.values[0] - expected) < 1e-10 * abs(expected)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        op = random_hermitian(rng, 6)
        system = eig_hermitian(op)
        rebuilt = (system.vectors * system.values) @ system.vectors.conj().T
        norm = np.linalg.norm(op.matrix)
        assert np.linalg.norm(op.matrix - rebuilt) <= 1e-10 * max(norm, 1.0)
        gram = system.vectors.conj().T @ system.vectors
        assert np.max(np.abs(gram - np.eye(6))) < 1e-10


class TestThermalState:
    def test_infinite_temperature_is_maximally_mixed(self):
        spec = ModelSpec(ModelKind.XY_RING, 4, {"h": 1.0}, ("lambda", "gamma"))
        ham = build_hamiltonian(spec, ParameterPoint((0.5, 0.6)))
        rho = thermal_state(ham, 1e6)
        assert np.max(np.abs(rho.matrix - np.eye(16) / 16)) < 1e-4

    def test_trimer_weights(self):
        spec = ModelSpec(ModelKind.HEISENBERG_TRIMER, 3, {"J": 1.0, "K": 0.5}, ("T",))
        ham = build_hamiltonian(spec, ParameterPoint((1.0,)))
        rho = thermal_state(ham, 1.0)
        eigs = np.sort(np.linalg.eigvalsh(rho.matrix))
        energies = np.array([-0.875] * 2 + [-0.375] * 2 + [0.625] * 4)
        w = np.exp(-energies)
        w /= w.sum()
        assert np.allclose(eigs, np.sort(w), atol=1e-12)

    def test_low_temperature_reaches_ground_projector(self):
        spec = ModelSpec(ModelKind.XY_RING, 4, {"h": 1.0}, ("lambda", "gamma"))
        ham = build_hamiltonian(spec, ParameterPoint((0.5, 0.6)))
        cold = thermal_state(ham, 1e-3)
        ground = ground_state(ham)
        assert trace_distance(cold, ground) < 1e-6

    def test_rejects_nonpositive_temperature(self):
        ham = hermitian(np.diag([0.0, 1.0]))
        with pytest.raises(ValueError):
            thermal_state(ham, 0.0)
        with pytest.raises(ValueError):
            thermal_state(ham, -1.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_commutes_with_hamiltonian(self, seed):
        rng = np.random.default_rng(seed)
        ham = random_hermitian(rng, 6)
        rho = thermal_state(ham, 0.7)
        comm = rho.matrix @ ham.matrix - ham.matrix @ rho.matrix
        assert np.linalg.norm(comm) <= 1e-10 * max(1.0, np.linalg.norm(ham.matrix))

    def test_cold_limit_bound(self):
        ham = hermitian(np.diag([0.0, 1.0, 2.5, 3.0]))
        gap = 1.0
        temperature = gap / 150.0
        rho = thermal_state(ham, temperature)
        ground = ground_state(ham)
        bound = np.exp(-gap / temperature) * 4
        assert trace_distance(rho, ground) <= bound


class TestGroundState:
    def test_two_level(self):
        out = ground_state(hermitian(np.diag([0.0, 1.0])))
        assert np.allclose(out.matrix, np.diag([1.0, 0.0]))
        assert abs(out.purity() - 1.0) < 1e-10

    def test_xy_ring_matches_momentum_blocks(self):
        spec = ModelSpec(ModelKind.XY_RING, 4, {"h": 1.0}, ("lambda", "gamma"))
        ham = build_hamiltonian(spec, ParameterPoint((0.5, 0.6)))
        rho = ground_state(ham)
        psi = xy_ring_ground_state_momentum(4, 0.5, 0.6, 1.0)
        fidelity = float(np.real(psi.conj() @ rho.matrix @ psi))
        assert fidelity >= 1.0 - 1e-10

    def test_degenerate_raises(self):
        ham = hermitian(np.diag([0.0, 1e-12, 1.0]))
        with pytest.raises(DegenerateGroundStateError):
            ground_state(ham, gap_tolerance=1e-9)
