import numpy as np
import pytest

from conftest import one_dof
from ssr.bench import build_two_dof, cubic_spring, play_spring, time_march_oracle
from ssr.errors import BothFailed, Diverged, MaxIter
from ssr.forcing import FrequencyIndexSet, harmonic_forcing, qper_forcing
from ssr.newton import (
    hybrid_solve,
    newton_iterate,
    newton_solve_periodic,
    newton_solve_quasiperiodic,
    residual_periodic,
    solve,
    solve_quasiperiodic_hybrid,
)
from ssr.picard import picard_iterate
from ssr.problem import periodic_problem, quasiperiodic_problem


@pytest.fixture(scope="module")
def cubic2():
    return build_two_dof(1, 1, 0.3, 0.5)


class TestNewton:
    def test_linear_one_step(self):
        p = periodic_problem(build_two_dof(1, 1, 0.3), harmonic_forcing([0.1, 0.1], 0.8), m=64)
        u, trace = newton_iterate(p, tol=1e-12)
        assert trace.iterations == 1

    def test_quadratic_convergence(self, cubic2):
        p = periodic_problem(cubic2, harmonic_forcing([0.1, 0.1], 1.0), m=128)
        u, trace = newton_iterate(p, tol=1e-13)
        r = np.array(trace.residual_norms)
        assert len(r) <= 6
        # r_{k+1} <= C r_k^2 with a modest constant until round-off
        ratios = r[2:-1] / r[1:-2] ** 2
        assert np.all(ratios < 1.0)
        assert r[-1] < 1e-13

    def test_matches_picard(self, cubic2):
        p = periodic_problem(cubic2, harmonic_forcing([0.01, 0.01], 0.4), m=128)
        a, _ = newton_iterate(p, tol=1e-12)
        b, _ = picard_iterate(p, tol=1e-12)
        assert np.max(np.abs(a - b)) < 1e-8

    @pytest.mark.parametrize("route", ["full", "position"])
    def test_jacobian_finite_difference(self, cubic2, route, rng):
        p = periodic_problem(cubic2, harmonic_forcing([0.1, 0.1], 0.9), m=16, route=route)
        for _ in range(20):
            u = rng.normal(scale=0.5, size=p.state_shape)
            v = rng.normal(size=p.state_shape)
            h = 1e-6
            fd = (p.residual(u + h * v) - p.residual(u - h * v)) / (2 * h)
            jv = (p.jacobian(u) @ v.ravel()).reshape(p.state_shape)
            assert np.max(np.abs(fd - jv)) <= 1e-6 * max(1.0, np.max(np.abs(jv)))

    def test_residual_periodic(self, cubic2):
        p = periodic_problem(cubic2, harmonic_forcing([0.05, 0.05], 0.7), m=32)
        sol, _ = newton_solve_periodic(p, tol=1e-12)
        assert np.max(np.abs(residual_periodic(p, sol.samples))) <= 1e-12
        assert np.max(np.abs(residual_periodic(p, np.zeros(p.state_shape)))) > 1e-3

    def test_quasiperiodic_k1_matches_periodic(self, cubic2):
        K = 6
        f = harmonic_forcing([0.1, 0.0], 1.3)
        up, _ = newton_iterate(periodic_problem(cubic2, f, m=2 * K + 2, scheme="spectral"), tol=1e-13)
        q = quasiperiodic_problem(cubic2, f, K=K)
        sol, _ = newton_solve_quasiperiodic(q, tol=1e-13)
        assert np.max(np.abs(up - sol.samples)) < 1e-10

    def test_max_iter(self, cubic2):
        p = periodic_problem(cubic2, harmonic_forcing([0.1, 0.1], 1.0), m=64)
        with pytest.raises(MaxIter):
            newton_iterate(p, tol=1e-15, max_iter=1)


class TestHybrid:
    def test_off_resonance_uses_picard(self, cubic2):
        p = periodic_problem(cubic2, harmonic_forcing([0.01, 0.01], 0.4), m=64)
        _, _, method = hybrid_solve(p)
        assert method == "picard"

    def test_falls_back_to_newton(self):
        sys = one_dof(1.0, 0.05, cubic_spring(0.5, n=1))
        p = periodic_problem(sys, harmonic_forcing([0.3], 1.1), m=64)
        with pytest.raises((Diverged, MaxIter)):
            picard_iterate(p, max_iter=200)
        sol, _, method = hybrid_solve(p)
        assert method == "newton" and sol.meta["residual"] <= 1e-8

    def test_play_spring_against_oracle(self):
        sys = build_two_dof(1, 1, 0.02, play_spring(0.1, 0.1))
        f = harmonic_forcing([0.02, 0.0], 1.73)
        sol, _, _ = solve(periodic_problem(sys, f, m=256))
        ref = time_march_oracle(sys, f, steps_per_period=200, transient_tol=1e-6)
        assert np.max(np.abs(sol.amplitude() - ref.amplitude)) <= 1e-3 * np.max(ref.amplitude)

    def test_qp_hybrid_in_picard_failure_band(self):
        sys = build_two_dof(1, 1, 0.02, 0.5)
        sol, _, method = solve_quasiperiodic_hybrid(sys, qper_forcing(1.0025, np.sqrt(3) + 1e-3, 0.01),
                                                    K=1)
        assert method == "newton"
        assert sol.meta["tail"] <= 1e-3

    def test_both_failed(self):
        sys = one_dof(1.0, 0.05, cubic_spring(5.0, n=1))
        p = periodic_problem(sys, harmonic_forcing([50.0], 1.0), m=32)
        with pytest.raises(BothFailed) as info:
            hybrid_solve(p, budgets={"picard": 20, "newton": 2})
        assert info.value.picard_trace is not None
        assert info.value.newton_trace is not None
