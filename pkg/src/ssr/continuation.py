"""Sequential sweeps, pseudo-arc-length continuation and backbone curves.

Periodic unknowns live on the phase grid ``sigma_j = j/m`` with physical
time ``t = sigma T``. Arc length is measured in scaled coordinates: nodal
values are divided by ``sqrt(m)`` (an RMS weight) and the period by a
reference period, so that both blocks are dimensionless and comparable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import ConvolutionOperator, build_convolution_operator_dT
from .errors import (
    BranchPointError,
    ConvergenceError,
    ModelError,
    ResonanceError,
    SeedRejected,
    SingularJacobian,
    StepFailed,
)
from .model import MechanicalSystem, modal_decompose_second_order
from .newton import lu_solve_checked, solve
from .problem import make_basis, periodic_problem, choose_route


@dataclass
class BranchPoint:
    """Accepted point of a solution branch.

    ``tangent`` is a unit vector in the scaled unknown space; ``param_sign``
    is the sign of its period component.
    """

    samples: np.ndarray
    T: float
    tangent: Optional[np.ndarray] = None
    arc_param: float = 0.0
    fold: bool = False
    failed: bool = False
    d: float = 0.0
    method: str = ""
    iterations: int = 0
    residual: float = float("nan")
    amplitude: Optional[np.ndarray] = None
    param_sign: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def omega(self):
        return 2 * np.pi / self.T


@dataclass
class ContinuationBranch:
    points: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def folds(self):
        return [i for i, p in enumerate(self.points) if p.fold]

    @property
    def failures(self):
        return [i for i, p in enumerate(self.points) if p.failed]

    def omegas(self):
        return np.array([p.omega for p in self.points])

    def amplitudes(self, dof=0):
        return np.array([np.nan if p.amplitude is None else p.amplitude[dof] for p in self.points])


# ----------------------------------------------------------- sequential sweep

def sequential_sweep(system, forcing, omegas, m=128, method="hybrid", tol=1e-8, max_iter=200,
                     route="auto", scheme="trapezoid", warm_start=True):
    """Solve at each frequency, warm-starting from the previous converged point.

    Failed points are recorded with ``failed=True``; the sweep continues.
    """
    route = choose_route(system, route)
    basis = make_basis(system, route)
    branch = ContinuationBranch(settings={"kind": "sequential", "method": method, "m": m,
                                          "tol": tol, "route": route})
    guess = None
    for om in omegas:
        T = 2 * np.pi / om
        problem = periodic_problem(system, forcing.with_omega(om), T, m, basis=basis, scheme=scheme)
        try:
            sol, trace, used = solve(problem, method, guess, tol, max_iter)
        except ConvergenceError as exc:
            branch.points.append(BranchPoint(np.full(problem.state_shape, np.nan), T, failed=True,
                                             method=method, iterations=_iters(exc), residual=np.nan))
            continue
        if warm_start:
            guess = sol.samples
        branch.points.append(BranchPoint(sol.samples, T, method=used, iterations=trace.iterations,
                                         residual=sol.meta["residual"], amplitude=sol.amplitude()))
    return branch


def _iters(exc):
    total = 0
    for attr in ("picard_trace", "newton_trace", "trace"):
        tr = getattr(exc, attr, None)
        if tr is not None:
            total += tr.iterations
            if attr != "trace":
                continue
            break
    return total


# ---------------------------------------------------------- forced families

class ForcedFamily:
    """Periodic responses ``N(x, T) = x - P(T)(f - S(x)) = 0`` parameterized by ``T``.

    With ``locked=True`` the forcing samples ``f(sigma_j)`` do not depend on
    ``T`` (the forcing frequency follows ``2 pi / T``). Otherwise forcing is
    sampled in physical time with its own fixed frequencies.
    """

    kind = "forced"

    def __init__(self, system, forcing, m=128, route="auto", T_ref=None, locked=True):
        self.system = system
        self.forcing = forcing
        self.m = m
        self.route = choose_route(system, route)
        self.basis = make_basis(system, self.route)
        self.locked = locked
        self.T_ref = 2 * np.pi / forcing.Omega[0] if T_ref is None else T_ref
        self.kernel = "G" if self.route == "full" else "L"
        self._cache = {}

    # scaling between physical unknowns and arc-length coordinates
    def pack(self, x, T):
        return np.concatenate([np.ravel(x) / np.sqrt(self.m), [T / self.T_ref]])

    def unpack(self, y):
        return y[:-1].reshape(self.m, -1) * np.sqrt(self.m), y[-1] * self.T_ref

    def problem(self, T):
        key = float(T)
        if key not in self._cache:
            forcing = self.forcing.with_omega(2 * np.pi / T) if self.locked else self.forcing
            self._cache = {key: periodic_problem(self.system, forcing, T, self.m, basis=self.basis,
                                                 with_velocity=False)}
            if not self.locked:
                grid = self._cache[key].grid
                self._cache[key].force[...] = self._lift(self.forcing.evaluate(grid.nodes))
        return self._cache[key]

    def _lift(self, f):
        if self.route == "full":
            out = np.zeros(f.shape[:-1] + (2 * f.shape[-1],))
            out[..., f.shape[-1]:] = f
            return out
        return f

    def residual(self, y):
        x, T = self.unpack(y)
        return self.problem(T).residual(x).ravel()

    def dforce_dT(self, T):
        """Derivative of the forcing samples in ``T`` (zero when locked)."""
        p = self.problem(T)
        if self.locked:
            return np.zeros(p.state_shape)
        sigma = p.grid.sigma
        out = np.zeros((self.m, self.system.n), dtype=complex)
        for kap, val in self.forcing.table.items():
            nu = self.forcing.frequency(kap)
            out += (1j * nu * sigma * np.exp(1j * nu * sigma * T))[:, None] * val
        return self._lift(out.real)

    def jacobian(self, y):
        x, T = self.unpack(y)
        p = self.problem(T)
        Jx = p.jacobian(x) * np.sqrt(self.m)
        JT = jacobian_wrt_T(p, x, T, self.dforce_dT(T)) * self.T_ref
        return np.column_stack([Jx, JT])

    def describe(self, y):
        x, T = self.unpack(y)
        sol = self.problem(T).wrap(x)
        return x, T, sol.amplitude()

    def param_component(self, tangent):
        return tangent[-1]


def jacobian_wrt_T(problem, x, T, dforce=None):
    """``dN/dT`` for ``N = x - P(T)(f - S(x))`` on the phase grid.

    The kernel weights are differentiated analytically (kernel derivative
    in ``T`` plus the node-motion term); ``dforce`` adds the chain term of
    forcing sampled in physical time.
    """
    op_dT = build_convolution_operator_dT(problem.basis, T, problem.grid.m, problem.operator.kernel,
                                          problem.operator.scheme)
    out = -op_dT.apply(problem.force - problem.nl(x))
    if dforce is not None:
        out = out - problem.operator.apply(dforce)
    return out.ravel()


# ------------------------------------------------------ pseudo-arc-length core

def branch_tangent(jac, t_prev):
    """Unit null vector of ``jac`` (``k x (k+1)``) oriented along ``t_prev``."""
    bordered = np.vstack([jac, t_prev[None, :]])
    rhs = np.zeros(jac.shape[0] + 1)
    rhs[-1] = 1.0
    try:
        t = lu_solve_checked(bordered, rhs)
    except SingularJacobian:
        raise BranchPointError("bordered tangent system is singular (corank above one)") from None
    t /= np.linalg.norm(t)
    if np.dot(t, t_prev) < 0:
        t = -t
    return t


def _corrector(family, y_pred, y0, t0, dp, tol, max_newton):
    try:
        return _corrector_raw(family, y_pred, y0, t0, dp, tol, max_newton)
    except (ResonanceError, ModelError):
        return None, None


def _corrector_raw(family, y_pred, y0, t0, dp, tol, max_newton):
    y = y_pred.copy()
    for _ in range(max_newton):
        family.newton_count = getattr(family, "newton_count", 0) + 1
        if family.unpack(y)[1] <= 0:
            return None, None
        r = family.residual(y)
        c = np.dot(y - y0, t0) - dp
        if not np.all(np.isfinite(r)):
            return None, None
        if np.max(np.abs(r)) <= tol and abs(c) <= 1e-10:
            return y, family.jacobian(y)
        J = family.jacobian(y)
        bordered = np.vstack([J, t0[None, :]])
        try:
            dy = lu_solve_checked(bordered, -np.concatenate([r, [c]]))
        except SingularJacobian:
            return None, None
        y = y + dy
    r = family.residual(y)
    c = np.dot(y - y0, t0) - dp
    if np.all(np.isfinite(r)) and np.max(np.abs(r)) <= tol and abs(c) <= 1e-10:
        return y, family.jacobian(y)
    return None, None


def pseudo_arclength_step(family, y0, t0, dp, tol=1e-8, max_newton=10, max_halvings=6):
    """Predictor-corrector step; returns ``(y, tangent, dp_used)``.

    Raises
    ------
    StepFailed
        The corrector failed after halving ``dp`` ``max_halvings`` times.
    """
    family.newton_count = 0
    for _ in range(max_halvings + 1):
        y, J = _corrector(family, y0 + dp * t0, y0, t0, dp, tol, max_newton)
        if y is not None and np.linalg.norm(y - y0) <= 5 * abs(dp):
            return y, branch_tangent(J, t0), dp
        dp *= 0.5
    raise StepFailed(f"corrector failed down to step {dp:.3e}")


def _run(family, y, t, dp, n_points, tol, dp_max, stop, branch):
    arc = 0.0
    streak = 0
    prev_sign = np.sign(family.param_component(t))
    for _ in range(n_points):
        try:
            y_new, t_new, used = pseudo_arclength_step(family, y, t, dp, tol)
        except StepFailed:
            branch.settings["stopped"] = "step_failed"
            break
        arc += used
        sign = np.sign(family.param_component(t_new))
        fold = bool(sign != prev_sign and sign != 0 and prev_sign != 0)
        prev_sign = sign if sign != 0 else prev_sign
        point = family.point(y_new, t_new, arc, fold, tol)
        point.iterations = family.newton_count
        branch.points.append(point)
        y, t = y_new, t_new
        streak = streak + 1 if used == dp else 0
        dp = used
        if streak >= 3:
            dp = min(1.3 * dp, dp_max)
            streak = 0
        if stop is not None and stop(branch.points[-1]):
            branch.settings["stopped"] = "range"
            break
    return branch


def _forced_point(self, y, t, arc, fold, tol):
    x, T, amp = self.describe(y)
    res = float(np.max(np.abs(self.residual(y))))
    return BranchPoint(x, T, t, arc, fold, method="arclength", residual=res, amplitude=amp,
                       param_sign=int(np.sign(self.param_component(t))))


ForcedFamily.point = _forced_point


def continue_branch(system, forcing, omega_start, omega_stop, dp=0.05, m=128, tol=1e-8,
                    max_points=500, dp_max=None, route="auto", method="hybrid"):
    """Pseudo-arc-length continuation of the forced response in the frequency.

    The branch starts with a regular solve at ``omega_start`` and stops
    once the frequency leaves the interval between start and stop.
    """
    T0 = 2 * np.pi / omega_start
    family = ForcedFamily(system, forcing.with_omega(omega_start), m, route, T_ref=T0)
    problem = family.problem(T0)
    sol, _, used = solve(problem, method, None, tol)
    y = family.pack(sol.samples, T0)
    direction = -np.sign(omega_stop - omega_start)  # sign of dT
    guess = np.zeros_like(y)
    guess[-1] = direction
    t = branch_tangent(family.jacobian(y), guess)
    branch = ContinuationBranch(settings={"kind": "arclength", "dp": dp, "m": m, "tol": tol,
                                          "route": family.route})
    first = family.point(y, t, 0.0, False, tol)
    first.method = used
    branch.points.append(first)
    lo, hi = sorted((omega_start, omega_stop))
    stop = lambda p: not (lo <= p.omega <= hi)
    return _run(family, y, t, dp, max_points, tol, dp_max or 4 * dp, stop, branch)


# ------------------------------------------------------------------ backbone

class BackboneFamily:
    """Periodic orbits of ``M xdd + d K xd + K x + S(x) = 0`` in ``(x, T, d)``.

    Equations: ``x = P(T, d)(-S(x))`` on the phase grid and the phase
    condition ``xdot_k(0) = 0`` with ``xdot = P_J(T, d)(-S(x))``. With
    ``C = d K`` every mode has the gain ``1/(w0^2 - f^2 + i d w0^2 f)``,
    so the operators use the spectral quadrature and their derivatives in
    ``T`` and ``d`` are exact.
    """

    kind = "backbone"

    def __init__(self, system, dof, m, T_ref):
        if np.any(system.C != 0):
            raise ModelError("backbone continuation needs an undamped system")
        if not system.position_only:
            raise ModelError("backbone continuation needs S = S(x)")
        self.system = system
        self.basis = modal_decompose_second_order(system)
        self.dof = dof
        self.m = m
        self.n = system.n
        self.T_ref = T_ref
        self._cache = {}

    def pack(self, x, T, d):
        return np.concatenate([np.ravel(x) / np.sqrt(self.m), [T / self.T_ref, d]])

    def unpack(self, y):
        return y[:-2].reshape(self.m, self.n) * np.sqrt(self.m), y[-2] * self.T_ref, y[-1]

    def operators(self, T, d):
        """``(P, P_J, dP/dT, dP_J/dT, dP/dd, dP_J/dd)`` as convolution operators."""
        key = (float(T), float(d))
        if key in self._cache:
            return self._cache[key]
        if T <= 0:
            raise ModelError("period must be positive")
        m = self.m
        w2 = self.basis.omega0 ** 2
        f = (2 * np.pi * np.fft.fftfreq(m, 1.0 / m) / T)[:, None]
        den = w2 - f ** 2 + 1j * d * w2 * f
        if np.any(np.abs(den) < 1e-14):
            raise ResonanceError(f"backbone operator resonant at T={T}, d={d}")
        Q = 1.0 / den
        dQ_df = -Q ** 2 * (-2 * f + 1j * d * w2)
        df_dT = -f / T
        Q_T = dQ_df * df_dT
        Q_d = -Q ** 2 * (1j * w2 * f)
        syms = [Q, 1j * f * Q, Q_T, 1j * (df_dT * Q + f * Q_T), Q_d, 1j * f * Q_d]
        U = self.basis.U
        ops = []
        for sym in syms:
            sym = np.array(sym)
            if m % 2 == 0:
                sym[m // 2] = 0.0
            ops.append(ConvolutionOperator(sym, U, U.T, float(T), "L", "spectral"))
        self._cache = {key: tuple(ops)}
        return self._cache[key]

    def residual(self, y):
        x, T, d = self.unpack(y)
        P, PJ = self.operators(T, d)[:2]
        s = -self.system.nonlinearity(x)
        return np.concatenate([(x - P.apply(s)).ravel(), [PJ.apply(s)[0, self.dof]]])

    def velocities(self, x, T, d):
        return self.operators(T, d)[1].apply(-self.system.nonlinearity(x))

    def jacobian(self, y):
        x, T, d = self.unpack(y)
        P, PJ, P_T, PJ_T, P_d, PJ_d = self.operators(T, d)
        S = self.m * self.n
        s = -self.system.nonlinearity(x)
        Dn = -self.system.nonlinearity.jacobian(x)[0]  # d(-S)/dx, shape (m, n, n)
        Jx = np.eye(S) - np.einsum("ild,ldb->ilb", P.dense().reshape(S, self.m, self.n),
                                   Dn).reshape(S, S)
        row = PJ.dense()[self.dof].reshape(self.m, self.n)
        J = np.zeros((S + 1, S + 2))
        J[:S, :S] = Jx * np.sqrt(self.m)
        J[S, :S] = np.einsum("ld,ldb->lb", row, Dn).ravel() * np.sqrt(self.m)
        J[:S, S] = -P_T.apply(s).ravel() * self.T_ref
        J[S, S] = PJ_T.apply(s)[0, self.dof] * self.T_ref
        J[:S, S + 1] = -P_d.apply(s).ravel()
        J[S, S + 1] = PJ_d.apply(s)[0, self.dof]
        return J

    def param_component(self, tangent):
        return tangent[-2]

    def point(self, y, t, arc, fold, tol):
        x, T, d = self.unpack(y)
        res = float(np.max(np.abs(self.residual(y))))
        amp = np.max(np.abs(x), axis=0)
        pt = BranchPoint(x, T, t, arc, fold, d=float(d), method="arclength", residual=res,
                         amplitude=amp, meta={"kind": "backbone"},
                         param_sign=int(np.sign(self.param_component(t))))
        pt.meta["velocities"] = self.velocities(x, T, d)
        return pt


def backbone_continue(system, dof_index_for_phase=0, seed_amplitude=1e-3, dp=0.02, m=128,
                      mode=0, max_points=60, tol=1e-9, amplitude_stop=None, dp_max=None):
    """Backbone curve of mode ``mode`` for an unforced, undamped system.

    The seed is the linear mode ``x = a u cos(w0 t)`` with ``x_k(0) = a``
    fixing the amplitude; it is corrected by Newton in ``(x, T, d)`` before
    the pseudo-arc-length continuation starts.

    Raises
    ------
    SeedRejected
        The corrector fails on the linear seed.
    """
    basis = modal_decompose_second_order(system)
    w0 = basis.omega0[mode]
    u = basis.U[:, mode]
    k = dof_index_for_phase
    if abs(u[k]) < 1e-12:
        raise SeedRejected("phase dof does not participate in the selected mode")
    T0 = 2 * np.pi / w0
    family = BackboneFamily(system, k, m, T0)
    sigma = np.arange(m) / m
    amp = seed_amplitude / u[k]
    x = amp * np.outer(np.cos(2 * np.pi * sigma), u)
    # period guess from the first-harmonic stiffening of the mode
    s = system.nonlinearity(x) @ u
    g = 2.0 * np.mean(s * np.cos(2 * np.pi * sigma)) / amp
    if w0 ** 2 + g <= 0 or g == 0:
        raise SeedRejected("nonlinearity does not detune the mode; no seed period available")
    lin = family.pack(x, 2 * np.pi / np.sqrt(w0 ** 2 + g), 0.0)
    y = _seed_corrector(family, lin, k, seed_amplitude, tol)
    t_guess = np.zeros_like(y)
    t_guess[:-2] = lin[:-2] / np.linalg.norm(lin[:-2])
    t = branch_tangent(family.jacobian(y), t_guess)
    branch = ContinuationBranch(settings={"kind": "backbone", "dp": dp, "m": m, "tol": tol,
                                          "seed_amplitude": seed_amplitude, "mode": mode})
    branch.points.append(family.point(y, t, 0.0, False, tol))
    stop = None
    if amplitude_stop is not None:
        stop = lambda p: np.max(np.abs(p.samples[:, k])) >= amplitude_stop
    return _run(family, y, t, dp, max_points, tol, dp_max or 4 * dp, stop, branch)


def _seed_corrector(family, y, k, a, tol, max_newton=30):
    """Newton on the backbone equations plus ``x_k(0) = a``."""
    m = family.m
    S = m * family.n
    row = np.zeros(S + 2)
    row[k] = np.sqrt(m)  # x_k(0) = sqrt(m) y[k]
    for _ in range(max_newton):
        try:
            r = np.concatenate([family.residual(y), [row @ y - a]])
        except ResonanceError:
            break
        if not np.all(np.isfinite(r)):
            break
        if np.max(np.abs(r)) <= tol:
            return y
        try:
            J = np.vstack([family.jacobian(y), row[None, :]])
            y = y + lu_solve_checked(J, -r)
        except (SingularJacobian, ResonanceError):
            break
    raise SeedRejected("Newton corrector failed on the linear seed")
