import numpy as np
import pytest

from ssr.bench import build_two_dof, measure_period
from ssr.continuation import (
    BackboneFamily,
    ForcedFamily,
    backbone_continue,
    branch_tangent,
    continue_branch,
    jacobian_wrt_T,
    pseudo_arclength_step,
    sequential_sweep,
)
from ssr.errors import ModelError
from ssr.forcing import harmonic_forcing
from ssr.problem import periodic_problem


def linear_frf(sys, F, omega):
    H = sys.K - omega ** 2 * sys.M + 1j * omega * sys.C
    return np.abs(np.linalg.solve(H, F))


@pytest.fixture(scope="module")
def cubic2():
    return build_two_dof(1, 1, 0.3, 0.5)


class TestJacobianT:
    @pytest.mark.parametrize("route", ["full", "position"])
    @pytest.mark.parametrize("locked", [True, False])
    def test_against_finite_difference(self, cubic2, route, locked, rng):
        fam = ForcedFamily(cubic2, harmonic_forcing([0.1, 0.1], 0.9), m=32, route=route, locked=locked)
        x = rng.normal(scale=0.2, size=fam.problem(7.0).state_shape)
        y = fam.pack(x, 7.0)
        col = fam.jacobian(y)[:, -1]
        h = 1e-6
        yp, ym = y.copy(), y.copy()
        yp[-1] += h
        ym[-1] -= h
        fd = (fam.residual(yp) - fam.residual(ym)) / (2 * h)
        assert np.max(np.abs(fd - col)) <= 1e-4 * np.max(np.abs(col))

    def test_plain_function(self, cubic2):
        T = 7.0
        x = np.zeros((32, 2))
        p = periodic_problem(cubic2, harmonic_forcing([0.1, 0.1], 2 * np.pi / T), T, m=32,
                             route="position")
        out = jacobian_wrt_T(p, x, T)
        assert out.shape == (64,) and np.all(np.isfinite(out))

    def test_backbone_jacobian(self, rng):
        sys = build_two_dof(1, 1, 0.0, 0.5)
        fam = BackboneFamily(sys, 0, 16, 2 * np.pi)
        y = np.concatenate([rng.normal(scale=0.1, size=32), [1.05, 0.01]])
        J = fam.jacobian(y)
        h = 1e-6
        for j in list(range(0, 32, 5)) + [32, 33]:
            e = np.zeros_like(y)
            e[j] = h
            fd = (fam.residual(y + e) - fam.residual(y - e)) / (2 * h)
            assert np.max(np.abs(fd - J[:, j])) <= 1e-6 * max(1, np.max(np.abs(J[:, j])))

    def test_backbone_requires_undamped(self, cubic2):
        with pytest.raises(ModelError):
            BackboneFamily(cubic2, 0, 16, 2 * np.pi)


class TestTangent:
    def test_unit_and_oriented(self, rng):
        J = rng.normal(size=(4, 5))
        prev = rng.normal(size=5)
        t = branch_tangent(J, prev)
        assert np.isclose(np.linalg.norm(t), 1.0)
        assert np.max(np.abs(J @ t)) < 1e-12
        assert t @ prev > 0
        assert np.allclose(branch_tangent(J, -prev), -t)


class TestForcedBranches:
    def test_linear_sweep_matches_frf(self):
        sys = build_two_dof(1, 1, 0.3)
        F = np.array([0.1, 0.1])
        omegas = np.linspace(0.3, 2.2, 12)
        branch = sequential_sweep(sys, harmonic_forcing(F, 0.3), omegas, m=512)
        for p in branch.points:
            ref = linear_frf(sys, F, p.omega)
            assert np.allclose(p.amplitude, ref, rtol=1e-3)

    def test_arclength_agrees_with_sweep(self):
        sys = build_two_dof(1, 1, 0.3)
        F = np.array([0.1, 0.1])
        branch = continue_branch(sys, harmonic_forcing(F, 0.5), 0.5, 2.0, dp=0.1, m=64)
        assert branch.settings["stopped"] == "range"
        assert not branch.folds
        for p in branch.points[:-1]:
            sweep = sequential_sweep(sys, harmonic_forcing(F, p.omega), [p.omega], m=64)
            assert np.allclose(p.amplitude, sweep.points[0].amplitude, rtol=1e-6)

    def test_step_satisfies_constraint(self, cubic2):
        fam = ForcedFamily(cubic2, harmonic_forcing([0.1, 0.1], 0.8), m=32)
        branch = continue_branch(cubic2, harmonic_forcing([0.1, 0.1], 0.8), 0.8, 1.2, dp=0.05, m=32,
                                 max_points=1)
        p0 = branch.points[0]
        y0 = fam.pack(p0.samples, p0.T)
        y, t, used = pseudo_arclength_step(fam, y0, p0.tangent, 0.05, tol=1e-10)
        assert abs(np.dot(y - y0, p0.tangent) - used) <= 1e-10
        assert np.max(np.abs(fam.residual(y))) <= 1e-10
        assert np.isclose(np.linalg.norm(t), 1.0)

    def test_fold_on_lightly_damped_branch(self):
        sys = build_two_dof(1, 1, 0.02, 0.5)
        branch = continue_branch(sys, harmonic_forcing([1.0, 1.0], 0.5), 0.5, 4.0, dp=0.1, m=64)
        assert len(branch.folds) >= 2
        assert all(p.iterations > 0 for p in branch.points[1:])
        omegas = branch.omegas()
        # the branch turns back in frequency between the two folds
        assert np.any(np.diff(omegas) < 0)


@pytest.fixture(scope="module")
def branch():
    sys = build_two_dof(1, 1, 0.0, 0.5)
    return sys, backbone_continue(sys, 0, 1e-3, 0.05, m=128, max_points=40)


class TestBackbone:
    def test_seed_period(self, branch):
        sys, br = branch
        assert abs(br.points[0].T - 2 * np.pi) <= 1e-5

    def test_dissipation_vanishes(self, branch):
        _, br = branch
        assert max(abs(p.d) for p in br.points) <= 1e-10

    def test_period_decreases_with_amplitude(self, branch):
        _, br = branch
        T = np.array([p.T for p in br.points])
        amp = np.array([p.amplitude[0] for p in br.points])
        assert np.all(np.diff(amp) > 0)
        assert np.all(np.diff(T) < 0)

    def test_period_matches_free_motion(self, branch):
        sys, br = branch
        p = br.points[-1]
        x0 = p.samples[0]
        v0 = p.meta["velocities"][0]
        T, _ = measure_period(sys, x0, v0, p.T, periods=5, steps_per_period=800)
        assert abs(T - p.T) <= 1e-6 * p.T
