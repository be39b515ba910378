"""Picard iterations for the periodic and quasi-periodic integral equations,
and a-priori convergence certificates for them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .discretization import kernel_columns, sup_norm
from .errors import Diverged, MaxIter, ProportionalityError
from .model import ModalBasisFirstOrder, check_proportional_damping
from .problem import periodic_problem, quasiperiodic_problem, resample_torus

DIVERGENCE_FACTOR = 1e6
SAFETY = 1.2


@dataclass
class IterationTrace:
    """Step (Picard) or residual (Newton) sup-norms of an iteration."""

    residual_norms: list = field(default_factory=list)
    status: str = "running"
    iterations: int = 0
    method: str = "picard"
    best_state: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final_residual(self):
        return self.residual_norms[-1] if self.residual_norms else float("nan")

    def extend(self, other):
        self.residual_norms.extend(other.residual_norms)
        self.iterations += other.iterations


def picard_iterate(problem, u0=None, tol=1e-8, max_iter=500):
    """Successive approximation ``u <- P (f - R(u))`` until the step is below ``tol``.

    Returns
    -------
    u : ndarray
    trace : IterationTrace

    Raises
    ------
    Diverged
        The step exceeds ``1e6`` times its running minimum or turns non-finite.
    MaxIter
    """
    u = problem.zeros() if u0 is None else np.array(u0, dtype=float)
    trace = IterationTrace(method="picard")
    best = np.inf
    for it in range(1, max_iter + 1):
        new = problem.picard_map(u)
        trace.iterations = it
        if not np.all(np.isfinite(new)):
            trace.status = "diverged"
            raise Diverged("Picard iterate became non-finite", trace)
        step = sup_norm(new - u)
        trace.residual_norms.append(step)
        u = new
        if step < best:
            best = step
            trace.best_state = u
        if step <= tol:
            trace.status = "converged"
            trace.best_state = u
            return u, trace
        if step > DIVERGENCE_FACTOR * best:
            trace.status = "diverged"
            raise Diverged(f"Picard step grew to {step:.3e} (min {best:.3e})", trace)
    trace.status = "max_iter"
    raise MaxIter(f"Picard did not converge in {max_iter} iterations", trace)


def picard_periodic(fsys, basis, forcing, T, grid, z0=None, tol=1e-8, max_iter=500,
                    scheme="trapezoid"):
    """Full-state periodic Picard iteration with the first-order kernel ``G``."""
    problem = periodic_problem(fsys.system, forcing, T, grid.m, basis=basis, scheme=scheme)
    z, trace = picard_iterate(problem, z0, tol, max_iter)
    return problem.wrap(z, method="picard", iterations=trace.iterations,
                        residual=trace.final_residual), trace


def picard_periodic_reduced(sys, basis2, forcing, T, grid, x0=None, tol=1e-8, max_iter=500,
                            scheme="trapezoid"):
    """Position-only periodic Picard iteration with the kernel ``L``.

    Velocities are recovered after convergence with the kernel ``J`` and
    stored in ``solution.meta["velocities"]``.
    """
    if not sys.position_only or not check_proportional_damping(sys):
        raise ProportionalityError("reduced iteration needs proportional damping and S = S(x)")
    problem = periodic_problem(sys, forcing, T, grid.m, basis=basis2, scheme=scheme)
    x, trace = picard_iterate(problem, x0, tol, max_iter)
    return problem.wrap(x, method="picard", iterations=trace.iterations,
                        residual=trace.final_residual), trace


def tail_ratio(solution):
    """Relative norm of the outermost shell of Fourier coefficients."""
    c = solution.coeffs
    shell = solution.index_set.shell(solution.N)
    total = np.linalg.norm(c)
    return 0.0 if total == 0 else float(np.linalg.norm(c[shell]) / total)


def solve_quasiperiodic(solver, system, forcing, K=None, u0=None, tol=1e-8, max_iter=500,
                        basis=None, adaptive=True, tail_tol=1e-3, K_max=10, route="auto"):
    """Run ``solver(problem, u0, tol, max_iter)`` with adaptive index-set growth."""
    K = max(forcing.max_index, 1) if K is None else K
    trace_all = None
    while True:
        problem = quasiperiodic_problem(system, forcing, K, route=route, basis=basis)
        basis = problem.basis
        if u0 is not None and u0.shape != problem.state_shape:
            u0 = resample_torus(u0, problem.index_set.grid_size, problem.index_set.k)
        try:
            u, trace = solver(problem, u0, tol, max_iter)
        except Exception as exc:
            if trace_all is not None and getattr(exc, "trace", None) is not None:
                trace_all.extend(exc.trace)
                exc.trace = trace_all
            raise
        if trace_all is None:
            trace_all = trace
        else:
            trace_all.extend(trace)
            trace_all.status = trace.status
        sol = problem.wrap(u, iterations=trace_all.iterations, residual=trace.final_residual)
        tail = tail_ratio(sol)
        sol.meta["tail"] = tail
        sol.meta["K"] = K
        if not adaptive or tail <= tail_tol or K >= K_max:
            return sol, trace_all, problem
        u0 = u
        K += 2


def picard_quasiperiodic(system, basis, forcing, index_set=None, u0=None, tol=1e-8,
                         max_iter=500, adaptive=True, tail_tol=1e-3, K_max=10):
    """Quasi-periodic Picard iteration on torus samples.

    ``index_set`` fixes the starting truncation ``K``; with ``adaptive`` the
    box grows by two until the outer-shell coefficient norm is below
    ``tail_tol`` relative to the whole.
    """
    K = None if index_set is None else index_set.K
    sol, trace, _ = solve_quasiperiodic(picard_iterate, system, forcing, K, u0, tol, max_iter,
                                        basis=basis, adaptive=adaptive, tail_tol=tail_tol,
                                        K_max=K_max)
    sol.meta["method"] = "picard"
    return sol, trace


# ------------------------------------------------------------- certificates

@dataclass
class ConvergenceCertificate:
    """Sufficient conditions for convergence of Picard from ``z0``.

    ``contraction_ok`` uses the factor-two form
    ``2 cond L Gamma < 1/a``; ``unscaled_ok`` reports the same test
    without the factor two for comparison.
    """

    gamma_or_hmax: float
    cond_product: float
    lipschitz_estimate: float
    delta: float
    a: float
    initial_error_norm: float
    contraction_ok: bool
    ball_ok: bool
    unscaled_ok: bool
    lipschitz_source: str = "analytic"

    @property
    def satisfied(self):
        return self.contraction_ok and self.ball_ok

    @property
    def contraction_factor(self):
        return 2 * self.cond_product * self.lipschitz_estimate * self.gamma_or_hmax


def _kernel_bound(basis, bound_inputs):
    """``Gamma(T)`` (periodic) or ``h_max``/``q_max`` (quasi-periodic) for the route."""
    first = isinstance(basis, ModalBasisFirstOrder)
    if bound_inputs.get("quasiperiodic", False):
        return kernels.h_max(basis.lambdas) if first else kernels.q_max(basis.modes)
    T = bound_inputs["T"]
    if first:
        return kernels.gamma_T(basis.lambdas, T)
    bound = kernels.gamma_position(basis.modes, T)
    m = bound_inputs.get("m")
    if m is not None:
        # discrete gain of the actual quadrature
        c = kernel_columns(basis, T, m, "L")
        bound = max(bound, float(np.sum(np.max(np.abs(c), axis=1))))
    return bound


def basis_cond(basis):
    if isinstance(basis, ModalBasisFirstOrder):
        return basis.projector_norm_product
    return basis.norm_product


def certify(basis, bound_inputs, nl_lipschitz, z0_error, delta=None, a=2.0,
            lipschitz_source="analytic"):
    """Fill a :class:`ConvergenceCertificate`.

    Parameters
    ----------
    basis : ModalBasisFirstOrder or ModalBasisSecondOrder
    bound_inputs : dict
        ``{"T": T, "m": m}`` for periodic problems or ``{"quasiperiodic": True}``.
    nl_lipschitz : callable or float
        Lipschitz bound of the nonlinearity on the ball of radius ``delta``.
    z0_error : float
        ``||G(z0) - z0||``, the size of the first Picard step.
    delta : float, optional
        Ball radius; defaults to ``a z0_error / (a - 1)``, the smallest
        radius for which the contraction test implies the ball test.
    a : float
        Slack parameter, ``a > 1``.
    """
    if a <= 1:
        raise ValueError("slack parameter a must exceed one")
    gamma = _kernel_bound(basis, bound_inputs)
    cond = basis_cond(basis)
    if delta is None:
        delta = a * z0_error / (a - 1) if z0_error > 0 else 1.0
    lip = float(nl_lipschitz(delta)) if callable(nl_lipschitz) else float(nl_lipschitz)
    q = 2 * cond * lip * gamma
    contraction_ok = q < 1.0 / a
    ball_ok = q < 1.0 and delta >= z0_error / (1.0 - q)
    return ConvergenceCertificate(gamma, cond, lip, float(delta), a, float(z0_error),
                                  bool(contraction_ok), bool(ball_ok),
                                  bool(cond * lip * gamma < 1.0 / a), lipschitz_source)


def sample_lipschitz(fun, dim, radius, samples=1000, rng=None):
    """Largest difference quotient of ``fun`` over random pairs in a ball.

    Half of the pairs are independent points, the other half are close
    pairs, which probe the local slope. Radii are biased towards the
    boundary where polynomial nonlinearities are steepest.
    """
    rng = np.random.default_rng(0) if rng is None else rng

    def draw(count):
        d = rng.standard_normal((count, dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * (radius * rng.random(count) ** 0.1)[:, None]

    half = samples // 2
    x = draw(samples)
    y = np.empty_like(x)
    y[:half] = draw(half)
    step = rng.standard_normal((samples - half, dim))
    step *= 1e-4 * radius / np.linalg.norm(step, axis=1, keepdims=True)
    y[half:] = x[half:] + step
    norms = np.linalg.norm(y, axis=1)
    over = norms > radius
    y[over] *= (radius / norms[over])[:, None]
    num = np.linalg.norm(fun(x) - fun(y), axis=1)
    den = np.linalg.norm(x - y, axis=1)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0


def certify_problem(problem, a=2.0, lipschitz="analytic", u0=None, samples=1000, rng=None):
    """Certificate for a discretized problem started from ``u0`` (default zero)."""
    u0 = problem.zeros() if u0 is None else u0
    err = sup_norm(problem.picard_map(u0) - u0)
    if problem.mode == "quasiperiodic":
        inputs = {"quasiperiodic": True}
    else:
        inputs = {"T": problem.grid.T, "m": problem.grid.m}
    sys = problem.system
    if lipschitz == "analytic" and sys.nonlinearity.lipschitz is not None:
        lip = sys.nonlinearity.lipschitz
        source = "analytic"
    else:
        n = sys.n

        def lip(radius):
            if sys.position_only:
                fun = lambda x: sys.nonlinearity(x)
                return SAFETY * sample_lipschitz(fun, n, radius, samples, rng)
            fun = lambda z: sys.nonlinearity(z[:, n:], z[:, :n])
            return SAFETY * sample_lipschitz(fun, 2 * n, radius, samples, rng)

        source = "sampled"
    shift = sup_norm(u0)
    return certify(problem.basis, inputs, lambda r: lip(r + shift), err, a=a,
                   lipschitz_source=source)
