import numpy as np
import pytest

from conftest import one_dof
from ssr.bench import build_two_dof, cubic_spring
from ssr.errors import ModelError, ProportionalityError
from ssr.model import (
    MechanicalSystem,
    check_proportional_damping,
    diagonalize_first_order,
    lift_to_first_order,
    modal_decompose_second_order,
)


def random_system(rng, n, proportional=True):
    A = rng.standard_normal((n, n))
    M = np.eye(n) + 0.2 * A @ A.T
    B = rng.standard_normal((n, n))
    K = B @ B.T + n * np.eye(n)
    if proportional:
        C = 0.02 * M + 0.05 * K
    else:
        E = rng.standard_normal((n, n))
        C = 0.1 * E @ E.T + 0.05 * np.eye(n)
    return MechanicalSystem(M, C, K)


class TestMechanicalSystem:
    def test_rejects_nonsymmetric(self):
        C = np.array([[0.6, -0.2], [-0.3, 0.6]])
        with pytest.raises(ModelError):
            MechanicalSystem(np.eye(2), C, np.eye(2))

    def test_rejects_indefinite_mass(self):
        with pytest.raises(ModelError):
            MechanicalSystem(np.diag([1.0, -1.0]), np.zeros((2, 2)), np.eye(2))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ModelError):
            MechanicalSystem(np.eye(2), np.zeros((3, 3)), np.eye(2))

    def test_position_only_flag(self):
        sys = build_two_dof(1, 1, 0.3, 0.5)
        assert sys.position_only
        x = np.array([0.3, -0.1])
        assert np.allclose(sys.nonlinearity(x, np.ones(2)), sys.nonlinearity(x, -np.ones(2)))


class TestLift:
    def test_identity_blocks(self):
        f = lift_to_first_order(MechanicalSystem(np.eye(2), np.zeros((2, 2)), np.eye(2)))
        Z, I = np.zeros((2, 2)), np.eye(2)
        assert np.array_equal(f.B, np.block([[Z, I], [I, Z]]))
        assert np.array_equal(f.A, np.block([[I, Z], [Z, -I]]))

    def test_two_dof_symmetric(self):
        f = lift_to_first_order(build_two_dof(1, 1, 0.3))
        assert np.allclose(f.A, f.A.T) and np.allclose(f.B, f.B.T)

    def test_R_has_zero_velocity_block(self):
        f = lift_to_first_order(build_two_dof(1, 1, 0.3, 0.5))
        z = np.array([0.2, -0.4, 1.0, 0.5])
        R = f.R(z)
        assert np.all(R[:2] == 0)
        assert np.isclose(R[2], 0.5)


class TestFirstOrderModes:
    def test_undamped_unit(self):
        b = diagonalize_first_order(lift_to_first_order(one_dof(1.0, 0.0)))
        assert np.allclose(sorted(b.lambdas.imag), [-1, 1])
        assert np.allclose(b.lambdas.real, 0, atol=1e-12)

    def test_two_dof_eigenvalues(self):
        b = diagonalize_first_order(lift_to_first_order(build_two_dof(1, 1, 0.3)))
        # lambda^2 + 0.3 lambda + 1 = 0
        root = np.roots([1, 0.3, 1])
        assert np.allclose(np.sort_complex(b.lambdas[:2]), np.sort_complex(root), atol=1e-12)
        assert np.isclose(abs(b.lambdas[0].imag), 0.988686, atol=1e-6)

    def test_conjugate_pairs_and_ordering(self, rng):
        b = diagonalize_first_order(lift_to_first_order(random_system(rng, 4, False)))
        lam = b.lambdas
        for j in range(0, len(lam), 2):
            if abs(lam[j].imag) > 0:
                assert np.isclose(lam[j + 1], np.conj(lam[j]))
        assert np.all(np.diff(np.abs(lam.imag)) >= -1e-12)

    @pytest.mark.parametrize("n", [1, 3, 6, 10])
    def test_eigen_residual_and_inverse(self, rng, n):
        f = lift_to_first_order(random_system(rng, n, False))
        b = diagonalize_first_order(f)
        res = f.A @ b.V - f.B @ b.V * b.lambdas
        assert np.max(np.abs(res)) <= 1e-10 * np.linalg.norm(f.A, 2)
        assert np.allclose(b.V @ b.Vinv, np.eye(2 * n), atol=1e-10)
        # B V diag(lambda) Vinv = A
        recon = f.B @ b.V @ np.diag(b.lambdas) @ b.Vinv
        assert np.allclose(recon, f.A, rtol=1e-8, atol=1e-8 * np.abs(f.A).max())

    def test_cross_route_eigenvalues(self, rng):
        sys = random_system(rng, 5)
        b1 = diagonalize_first_order(lift_to_first_order(sys))
        b2 = modal_decompose_second_order(sys)
        assert np.allclose(np.sort_complex(b1.lambdas), np.sort_complex(b2.eigenvalues()), atol=1e-8)


class TestSecondOrderModes:
    def test_two_dof_frequencies_and_damping(self):
        b = modal_decompose_second_order(build_two_dof(1, 1, 0.3))
        assert np.allclose(b.omega0, [1, np.sqrt(3)])
        # C = c K, so 2 zeta_j w_j = c w_j^2
        assert np.allclose(b.zeta, [0.15, 0.15 * np.sqrt(3)])

    def test_mass_normalized(self, rng):
        sys = random_system(rng, 6)
        b = modal_decompose_second_order(sys)
        assert np.allclose(b.U.T @ sys.M @ b.U, np.eye(6), atol=1e-10)
        for j in range(6):
            r = (sys.K - b.omega0[j] ** 2 * sys.M) @ b.U[:, j]
            assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(sys.K)

    def test_critical_class(self):
        b = modal_decompose_second_order(one_dof(1.0, 1.0))
        assert b.damping_class == ("critical",)

    def test_overdamped_roots(self):
        b = modal_decompose_second_order(one_dof(1.0, 2.0))
        assert b.damping_class == ("over",)
        assert np.isclose(b.beta[0], -2 + np.sqrt(3), atol=1e-12)
        assert np.isclose(b.gamma[0], -2 - np.sqrt(3), atol=1e-12)
        assert np.isclose(b.beta[0] * b.gamma[0], 1.0)
        assert np.isclose(b.beta[0] + b.gamma[0], 2 * b.alpha[0])

    def test_underdamped_identity(self, rng):
        b = modal_decompose_second_order(random_system(rng, 4))
        for m in b.modes:
            assert m.kind == "under"
            assert np.isclose(m.alpha ** 2 + m.omega ** 2, m.omega0 ** 2, rtol=1e-10)

    def test_nonproportional_rejected(self, rng):
        with pytest.raises(ProportionalityError):
            modal_decompose_second_order(random_system(rng, 3, False))


class TestProportionality:
    def test_two_dof(self):
        assert check_proportional_damping(build_two_dof(1, 1, 0.3))

    def test_zero_damping(self):
        assert check_proportional_damping(build_two_dof(1, 1, 0.0))

    def test_perturbed(self):
        sys = build_two_dof(1, 1, 0.3)
        C = sys.C.copy()
        C[0, 0] += 0.1
        assert not check_proportional_damping(MechanicalSystem(sys.M, C, sys.K))


class TestEnergy:
    def test_energy_of_cubic(self):
        sys = MechanicalSystem(np.eye(2), np.zeros((2, 2)), np.eye(2), cubic_spring(2.0))
        x, v = np.array([1.0, 0.5]), np.array([0.0, 1.0])
        # 0.5 |v|^2 + 0.5 |x|^2 + 2/4 x1^4
        assert np.isclose(sys.energy(x, v), 0.5 + 0.625 + 0.5)
