"""Newton-Raphson solution of the discretized residual ``u - P (f - R(u)) = 0``."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

from .discretization import sup_norm
from .errors import BothFailed, ConvergenceError, Diverged, MaxIter, SingularJacobian
from .picard import IterationTrace, picard_iterate, solve_quasiperiodic
from .problem import ResidualProblem, periodic_problem, quasiperiodic_problem  # noqa: F401

PIVOT_TOL = 1e-14
MAX_HALVINGS = 8


def residual_periodic(problem, z_samples):
    """``z - P (F - R(z))`` node by node."""
    return problem.residual(np.asarray(z_samples, dtype=float))


def lu_solve_checked(J, rhs, trace=None):
    lu, piv = la.lu_factor(J, check_finite=False)
    diag = np.abs(np.diag(lu))
    if not np.all(np.isfinite(diag)) or diag.min() < PIVOT_TOL * max(diag.max(), 1.0):
        if trace is not None:
            trace.status = "singular"
        raise SingularJacobian(f"Newton matrix is singular (pivot {diag.min():.3e})", trace)
    return la.lu_solve((lu, piv), rhs, check_finite=False)


def newton_iterate(problem, u0=None, tol=1e-8, max_iter=30):
    """Damped Newton iteration on the residual sup-norm.

    Each step solves ``(I + P DR(u)) mu = -F(u)`` by a dense LU
    factorization. A step that increases the residual is halved up to
    eight times.
    """
    u = problem.zeros() if u0 is None else np.array(u0, dtype=float)
    trace = IterationTrace(method="newton")
    r = problem.residual(u)
    rn = sup_norm(r)
    trace.residual_norms.append(rn)
    trace.best_state = u
    for it in range(1, max_iter + 1):
        if not np.isfinite(rn):
            trace.status = "diverged"
            raise Diverged("Newton residual became non-finite", trace)
        if rn <= tol:
            trace.status = "converged"
            return u, trace
        trace.iterations = it
        mu = lu_solve_checked(problem.jacobian(u), -r.ravel(), trace).reshape(u.shape)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = u + lam * mu
            rc = problem.residual(cand)
            rcn = sup_norm(rc)
            if np.isfinite(rcn) and rcn < rn:
                break
            lam *= 0.5
        else:
            trace.status = "diverged"
            raise Diverged("Newton step failed to reduce the residual after halving", trace)
        u, r, rn = cand, rc, rcn
        trace.residual_norms.append(rn)
        trace.best_state = u
    if rn <= tol:
        trace.status = "converged"
        return u, trace
    trace.status = "max_iter"
    raise MaxIter(f"Newton did not converge in {max_iter} steps", trace)


def newton_solve_periodic(problem, z0=None, tol=1e-8, max_iter=30):
    """Newton solve of a periodic collocation problem; returns ``(solution, trace)``."""
    z, trace = newton_iterate(problem, z0, tol, max_iter)
    return problem.wrap(z, method="newton", iterations=trace.iterations,
                        residual=trace.final_residual), trace


def newton_solve_quasiperiodic(problem, u0=None, tol=1e-8, max_iter=30):
    """Newton solve on torus samples with a fixed index set."""
    u, trace = newton_iterate(problem, u0, tol, max_iter)
    return problem.wrap(u, method="newton", iterations=trace.iterations,
                        residual=trace.final_residual), trace


def hybrid_iterate(problem, u0=None, tol=1e-8, budgets=None):
    """Picard first, then Newton from the best Picard iterate.

    Returns ``(u, trace, method_used)``. When Newton also fails from the
    best Picard iterate it is retried from ``u0`` before giving up.
    """
    budgets = {} if budgets is None else budgets
    try:
        u, trace = picard_iterate(problem, u0, tol, budgets.get("picard", 200))
        return u, trace, "picard"
    except (Diverged, MaxIter) as exc:
        ptrace = exc.trace
    starts = [ptrace.best_state]
    if u0 is not None or ptrace.best_state is None:
        starts.append(problem.zeros() if u0 is None else u0)
    ntrace = None
    for start in starts:
        try:
            u, ntrace = newton_iterate(problem, start, tol, budgets.get("newton", 30))
            return u, ntrace, "newton"
        except ConvergenceError as exc:
            ntrace = exc.trace
    raise BothFailed("Picard and Newton both failed", ptrace, ntrace)


def hybrid_solve(problem, z0=None, tol=1e-8, budgets=None):
    """Hybrid Picard/Newton solve; returns ``(solution, trace, method_used)``."""
    u, trace, method = hybrid_iterate(problem, z0, tol, budgets)
    sol = problem.wrap(u, method=method, iterations=trace.iterations,
                       residual=problem.residual_norm(u))
    return sol, trace, method


SOLVERS = {
    "picard": lambda p, u0, tol, it: picard_iterate(p, u0, tol, it),
    "newton": lambda p, u0, tol, it: newton_iterate(p, u0, tol, min(it, 50)),
    "hybrid": lambda p, u0, tol, it: hybrid_iterate(p, u0, tol, {"picard": it})[:2],
}


def solve(problem, method="hybrid", u0=None, tol=1e-8, max_iter=200):
    """Dispatch to a solver; returns ``(solution, trace, method_used)``."""
    if method == "hybrid":
        return hybrid_solve(problem, u0, tol, {"picard": max_iter})
    u, trace = SOLVERS[method](problem, u0, tol, max_iter)
    sol = problem.wrap(u, method=method, iterations=trace.iterations,
                       residual=problem.residual_norm(u))
    return sol, trace, method


def solve_quasiperiodic_hybrid(system, forcing, K=None, u0=None, tol=1e-8, max_iter=200,
                               method="hybrid", basis=None, adaptive=True, K_max=10):
    """Quasi-periodic solve with adaptive truncation; returns ``(solution, trace, method)``."""
    used = {}

    def runner(problem, start, tol_, it):
        if method == "hybrid":
            u, trace, m = hybrid_iterate(problem, start, tol_, {"picard": it})
        else:
            u, trace = SOLVERS[method](problem, start, tol_, it)
            m = method
        used["method"] = m
        return u, trace

    sol, trace, _ = solve_quasiperiodic(runner, system, forcing, K, u0, tol, max_iter, basis=basis,
                                        adaptive=adaptive, K_max=K_max)
    sol.meta["method"] = used["method"]
    return sol, trace, used["method"]
