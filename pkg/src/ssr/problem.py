"""Discretized fixed-point problems ``u = P (f - R(u))`` shared by all solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .discretization import (
    CollocationGrid,
    FourierSolution,
    PeriodicSolution,
    build_convolution_operator,
    build_torus_operator,
    sup_norm,
)
from .errors import DiscretizationError, ProportionalityError
from .forcing import FrequencyIndexSet
from .model import (
    check_proportional_damping,
    diagonalize_first_order,
    lift_to_first_order,
    modal_decompose_second_order,
)

MODES = ("periodic-full", "periodic-position", "quasiperiodic")


@dataclass
class ResidualProblem:
    """Discretized integral equation with its residual ``u - P (f - R(u))``.

    Attributes
    ----------
    mode : str
        One of ``periodic-full``, ``periodic-position`` or ``quasiperiodic``.
    operator : ConvolutionOperator or TorusOperator
        Linear convolution/Galerkin action ``P``.
    force : ndarray
        Forcing samples with the state layout.
    nl, dnl : callable
        Pointwise nonlinearity and its Jacobian (``(..., d) -> (..., d, d)``).
    route : str
        ``full`` (``z = (xdot, x)``) or ``position`` (``x``).
    """

    mode: str
    operator: object
    force: np.ndarray
    nl: Callable
    dnl: Callable
    route: str
    system: object
    basis: object
    grid: Optional[CollocationGrid] = None
    index_set: Optional[FrequencyIndexSet] = None
    lipschitz: Optional[Callable] = None
    velocity_operator: object = None
    _dense: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def state_shape(self):
        return self.force.shape

    @property
    def size(self):
        return self.force.size

    @property
    def d(self):
        return self.force.shape[-1]

    def zeros(self):
        return np.zeros(self.state_shape)

    def picard_map(self, u):
        return self.operator.apply(self.force - self.nl(u))

    def residual(self, u):
        return u - self.picard_map(u)

    def dense_operator(self):
        if self._dense is None:
            self._dense = self.operator.dense()
        return self._dense

    def jacobian(self, u):
        """Dense ``I + P blockdiag(DR(u))`` in node-major layout."""
        P = self.dense_operator()
        D = self.dnl(u).reshape(-1, self.d, self.d)
        S = self.size
        PD = np.einsum("ild,ldb->ilb", P.reshape(S, -1, self.d), D).reshape(S, S)
        PD[np.diag_indices(S)] += 1.0
        return PD

    def jvp(self, u, v):
        """Jacobian-vector product without assembly."""
        dv = np.einsum("...ab,...b->...a", self.dnl(u), v)
        return v + self.operator.apply(dv)

    def velocities(self, u):
        """Velocity samples for a position-route solution via the ``J`` kernel."""
        if self.route == "full":
            return u[..., : self.d // 2]
        if self.velocity_operator is None:
            raise DiscretizationError("problem was built without a velocity operator")
        return self.velocity_operator.apply(self.force - self.nl(u))

    def wrap(self, u, **meta):
        if self.mode == "quasiperiodic":
            return FourierSolution(self.index_set, u, self.route, meta)
        sol = PeriodicSolution(self.grid, u, self.route, meta)
        if self.route == "position" and self.velocity_operator is not None:
            sol.meta["velocities"] = self.velocities(u)
        return sol

    def residual_norm(self, u):
        return sup_norm(self.residual(u))


def _position_nl(system):
    nl = system.nonlinearity

    def f(x):
        return nl(x)

    def df(x):
        return nl.jacobian(x)[0]

    return f, df


def _full_nl(fsys):
    return fsys.R, fsys.DR


def choose_route(system, route="auto"):
    if route == "auto":
        ok = system.position_only and check_proportional_damping(system)
        return "position" if ok else "full"
    if route == "position":
        if not system.position_only:
            raise ProportionalityError("position route needs a velocity-independent nonlinearity")
        if not check_proportional_damping(system):
            raise ProportionalityError("position route needs proportional damping")
        return route
    if route == "full":
        return route
    raise ValueError(f"unknown route {route!r}")


def make_basis(system, route):
    if route == "position":
        return modal_decompose_second_order(system)
    return diagonalize_first_order(lift_to_first_order(system))


def periodic_problem(system, forcing, T=None, m=128, route="auto", scheme="trapezoid",
                     basis=None, with_velocity=True):
    """Collocation problem for the ``T``-periodic response.

    The forcing is sampled in phase, ``f(sigma_j T)`` with ``sigma_j = j/m``
    and the forcing frequency locked to ``2 pi / T``.
    """
    route = choose_route(system, route) if basis is None else (
        "full" if hasattr(basis, "lambdas") else "position")
    if basis is None:
        basis = make_basis(system, route)
    if T is None:
        T = 2 * np.pi / forcing.Omega[0]
    grid = CollocationGrid(m, T)
    f = forcing.phase_samples(grid.sigma)
    if route == "full":
        fsys = lift_to_first_order(system)
        nl, dnl = _full_nl(fsys)
        force = fsys.lift_forcing(f)
        op = build_convolution_operator(basis, T, m, "G", scheme)
        vel = None
    else:
        nl, dnl = _position_nl(system)
        force = f
        op = build_convolution_operator(basis, T, m, "L", scheme)
        vel = build_convolution_operator(basis, T, m, "J", scheme) if with_velocity else None
    mode = "periodic-full" if route == "full" else "periodic-position"
    return ResidualProblem(mode, op, force, nl, dnl, route, system, basis, grid=grid,
                           lipschitz=system.nonlinearity.lipschitz, velocity_operator=vel)


def quasiperiodic_problem(system, forcing, K=3, route="auto", basis=None, N=None):
    """Torus Galerkin problem with the box index set ``|kappa_i| <= K``."""
    route = choose_route(system, route) if basis is None else (
        "full" if hasattr(basis, "lambdas") else "position")
    if basis is None:
        basis = make_basis(system, route)
    if K < forcing.max_index:
        raise DiscretizationError(f"truncation K={K} drops forcing harmonics up to {forcing.max_index}")
    index_set = FrequencyIndexSet(forcing.Omega, K)
    N = index_set.grid_size if N is None else N
    f = forcing.torus_samples(N)
    if route == "full":
        fsys = lift_to_first_order(system)
        nl, dnl = _full_nl(fsys)
        force = fsys.lift_forcing(f)
        op = build_torus_operator(basis, index_set, "G", N)
    else:
        nl, dnl = _position_nl(system)
        force = f
        op = build_torus_operator(basis, index_set, "L", N)
    # keep the forcing inside the Galerkin space
    axes = tuple(range(index_set.k))
    spec = np.fft.fftn(force, axes=axes) * index_set.mask(N)[..., None]
    force = np.real(np.fft.ifftn(spec, axes=axes))
    return ResidualProblem("quasiperiodic", op, force, nl, dnl, route, system, basis,
                           index_set=index_set, lipschitz=system.nonlinearity.lipschitz)


def resample_torus(samples, N_new, k):
    """Band-limited resampling of torus samples to ``N_new`` nodes per angle."""
    N = samples.shape[0]
    if N_new == N:
        return samples
    axes = tuple(range(k))
    spec = np.fft.fftn(samples, axes=axes) / N ** k
    ints_old = np.fft.fftfreq(N, 1.0 / N).astype(int)
    keep = np.abs(ints_old) < min(N, N_new) // 2
    out = np.zeros((N_new,) * k + samples.shape[k:], dtype=complex)
    idx = ints_old[keep] % N_new
    src = np.nonzero(keep)[0]
    sel_src = np.ix_(*([src] * k))
    sel_dst = np.ix_(*([idx] * k))
    out[sel_dst] = spec[sel_src]
    return np.real(np.fft.ifftn(out, axes=axes)) * N_new ** k
