"""Mechanical system description, first-order lift and modal decompositions."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la

from .errors import (
    ModelError,
    NondiagonalizableError,
    ProportionalityError,
    ResonanceError,
)

SYM_RTOL = 1e-12
DEFECT_COND = 1e12
CRITICAL_TOL = 1e-9
NEAR_CRITICAL_TOL = 1e-6


@dataclass(frozen=True)
class Nonlinearity:
    """Nonlinear internal force ``S(x, xdot)``.

    All callables are vectorized over leading axes: ``x`` and ``v`` have
    shape ``(..., n)``, forces come back as ``(..., n)`` and Jacobians as
    ``(..., n, n)``.

    Parameters
    ----------
    force : callable
        ``force(x, v) -> S``.
    jac_x, jac_v : callable or None
        Partial Jacobians. ``jac_v`` is ignored when ``position_only``.
    position_only : bool
        True when ``S`` does not depend on the velocity.
    potential : callable or None
        ``potential(x) -> V`` with ``S = grad V`` (conservative forces only).
    lipschitz : callable or None
        ``lipschitz(radius) -> float``, an upper bound of ``||DS||_2`` on the
        ball ``|x| <= radius`` about the origin.
    """

    force: Callable
    jac_x: Optional[Callable] = None
    jac_v: Optional[Callable] = None
    position_only: bool = True
    potential: Optional[Callable] = None
    lipschitz: Optional[Callable] = None
    name: str = "custom"

    def __call__(self, x, v=None):
        return self.force(np.asarray(x, dtype=float), v)

    def jacobian(self, x, v=None, eps=1e-7):
        """Return ``(D_x S, D_v S)``; finite differences when no analytic form."""
        x = np.asarray(x, dtype=float)
        if v is None:
            v = np.zeros_like(x)
        if self.jac_x is not None:
            dx = self.jac_x(x, v)
        else:
            dx = _fd_jacobian(lambda y: self.force(y, v), x, eps)
        if self.position_only:
            dv = np.zeros_like(dx)
        elif self.jac_v is not None:
            dv = self.jac_v(x, v)
        else:
            dv = _fd_jacobian(lambda w: self.force(x, w), v, eps)
        return dx, dv


def _fd_jacobian(fun, x, eps):
    n = x.shape[-1]
    f0 = fun(x)
    jac = np.empty(x.shape + (n,))
    for k in range(n):
        h = eps * (1.0 + np.abs(x[..., k]))
        xp = x.copy()
        xp[..., k] += h
        jac[..., :, k] = (fun(xp) - f0) / h[..., None]
    return jac


def zero_nonlinearity(n):
    return Nonlinearity(
        force=lambda x, v=None: np.zeros_like(np.asarray(x, dtype=float)),
        jac_x=lambda x, v=None: np.zeros(np.shape(x) + (n,)),
        potential=lambda x: np.zeros(np.shape(x)[:-1]),
        lipschitz=lambda r: 0.0,
        name="none",
    )


def _check_symmetric(name, mat):
    scale = max(np.abs(mat).max(), 1.0)
    if np.abs(mat - mat.T).max() > SYM_RTOL * scale:
        raise ModelError(f"{name} is not symmetric")


@dataclass(frozen=True)
class MechanicalSystem:
    """``M xdd + C xd + K x + S(x, xd) = f(t)``."""

    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    nonlinearity: Optional[Nonlinearity] = None

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        C = np.array(self.C, dtype=float)
        K = np.array(self.K, dtype=float)
        n = M.shape[0]
        for name, mat in (("M", M), ("C", C), ("K", K)):
            if mat.shape != (n, n):
                raise ModelError(f"{name} must be {n}x{n}, got {mat.shape}")
            _check_symmetric(name, mat)
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ModelError("M is not positive definite") from None
        for mat in (M, C, K):
            mat.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "K", K)
        if self.nonlinearity is None:
            object.__setattr__(self, "nonlinearity", zero_nonlinearity(n))

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def position_only(self):
        return self.nonlinearity.position_only

    def with_damping(self, C):
        return MechanicalSystem(self.M, C, self.K, self.nonlinearity)

    def energy(self, x, v):
        """Kinetic plus potential energy along samples ``x, v`` of shape (m, n)."""
        x = np.atleast_2d(x)
        v = np.atleast_2d(v)
        kin = 0.5 * np.einsum("ti,ij,tj->t", v, self.M, v)
        pot = 0.5 * np.einsum("ti,ij,tj->t", x, self.K, x)
        if self.nonlinearity.potential is None:
            raise ModelError("nonlinearity has no potential")
        return kin + pot + self.nonlinearity.potential(x)


@dataclass(frozen=True)
class FirstOrderSystem:
    """``B zd = A z + R(z) + F(t)`` with ``z = (xdot, x)``."""

    system: MechanicalSystem
    B: np.ndarray
    A: np.ndarray

    @property
    def dim(self):
        return self.B.shape[0]

    def R(self, z):
        z = np.asarray(z, dtype=float)
        n = self.system.n
        out = np.zeros_like(z)
        out[..., n:] = self.system.nonlinearity(z[..., n:], z[..., :n])
        return out

    def DR(self, z):
        z = np.asarray(z, dtype=float)
        n = self.system.n
        dx, dv = self.system.nonlinearity.jacobian(z[..., n:], z[..., :n])
        out = np.zeros(z.shape + (2 * n,))
        out[..., n:, :n] = dv
        out[..., n:, n:] = dx
        return out

    def lift_forcing(self, f):
        """Map position-space force samples ``(..., n)`` to ``(..., 2n)``."""
        f = np.asarray(f)
        out = np.zeros(f.shape[:-1] + (self.dim,), dtype=f.dtype)
        out[..., self.system.n:] = f
        return out


def lift_to_first_order(sys):
    n = sys.n
    Z = np.zeros((n, n))
    B = np.block([[Z, sys.M], [sys.M, sys.C]])
    A = np.block([[sys.M, Z], [Z, -sys.K]])
    return FirstOrderSystem(sys, B, A)


@dataclass(frozen=True)
class ModalBasisFirstOrder:
    """Eigen-data of the pencil ``(A, B)``.

    ``W = (B V)^{-1}`` projects first-order forcing onto the modal
    coordinates, so that ``z = V w`` and ``wd = diag(lambdas) w + W F``.
    """

    lambdas: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    W: np.ndarray
    cond_product: float
    projector_norm_product: float

    @property
    def dim(self):
        return len(self.lambdas)


def diagonalize_first_order(fsys):
    A, B = fsys.A, fsys.B
    lam, V = la.eig(A, B)
    if not np.all(np.isfinite(lam)):
        raise NondiagonalizableError("infinite eigenvalues: singular B")
    order = sorted(range(len(lam)), key=lambda j: (round(abs(lam[j].imag), 12),
                                                   round(lam[j].real, 12),
                                                   -np.sign(lam[j].imag), j))
    lam = lam[order]
    V = V[:, order]
    # enforce exact conjugate pairs (positive imaginary part first)
    j = 0
    while j < len(lam):
        if abs(lam[j].imag) > 1e-12 * max(1.0, abs(lam[j])):
            if j + 1 >= len(lam):
                raise NondiagonalizableError("unpaired complex eigenvalue")
            if lam[j].imag < 0:
                lam[j], lam[j + 1] = lam[j + 1], lam[j]
                V[:, [j, j + 1]] = V[:, [j + 1, j]]
            lam[j + 1] = np.conj(lam[j])
            V[:, j + 1] = np.conj(V[:, j])
            j += 2
        else:
            lam[j] = lam[j].real
            V[:, j] = V[:, j].real / np.linalg.norm(V[:, j].real)
            j += 1
    if np.any(np.abs(lam) < 1e-12 * max(1.0, np.abs(lam).max())):
        raise ResonanceError("zero eigenvalue (rigid-body mode) violates non-resonance at zero frequency")
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > DEFECT_COND:
        raise NondiagonalizableError(f"eigenvector matrix condition {sv[0] / max(sv[-1], 1e-300):.3e}")
    Vinv = np.linalg.inv(V)
    W = np.linalg.inv(B @ V)
    cond = float(sv[0] * np.linalg.norm(Vinv, 2))
    proj = float(sv[0] * np.linalg.norm(W, 2))
    for arr in (lam, V, Vinv, W):
        arr.setflags(write=False)
    return ModalBasisFirstOrder(lam, V, Vinv, W, cond, proj)


@dataclass(frozen=True)
class Mode:
    """Scalar modal oscillator ``ydd + 2 zeta w0 yd + w0^2 y = phi``."""

    omega0: float
    zeta: float
    alpha: float
    omega: float
    beta: float
    gamma: float
    kind: str  # "under" | "critical" | "over"

    @classmethod
    def from_frequency(cls, omega0, zeta):
        if omega0 <= 0:
            raise ResonanceError("zero natural frequency (rigid-body mode)")
        if abs(zeta - 1.0) <= CRITICAL_TOL:
            kind = "critical"
        elif zeta < 1.0:
            kind = "under"
        else:
            kind = "over"
        if kind != "critical" and abs(zeta - 1.0) <= NEAR_CRITICAL_TOL:
            warnings.warn(f"near-critical damping zeta={zeta!r}: kernel branch is ill-conditioned",
                          RuntimeWarning, stacklevel=3)
        alpha = -zeta * omega0
        omega = 0.0 if kind == "critical" else omega0 * np.sqrt(abs(1.0 - zeta * zeta))
        if kind == "over":
            # real roots of s^2 + 2 zeta w0 s + w0^2, computed stably
            beta = -omega0 ** 2 / (zeta * omega0 + omega)
            gamma = alpha - omega
        else:
            beta = alpha + omega
            gamma = alpha - omega
        return cls(float(omega0), float(zeta), float(alpha), float(omega),
                   float(beta), float(gamma), kind)

    @property
    def eigenvalues(self):
        if self.kind == "under":
            return np.array([complex(self.alpha, self.omega), complex(self.alpha, -self.omega)])
        return np.array([complex(self.beta), complex(self.gamma)])


@dataclass(frozen=True)
class ModalBasisSecondOrder:
    U: np.ndarray
    omega0: np.ndarray
    zeta: np.ndarray
    modes: tuple = field(repr=False)

    @property
    def n(self):
        return len(self.omega0)

    @property
    def alpha(self):
        return np.array([m.alpha for m in self.modes])

    @property
    def omega(self):
        return np.array([m.omega for m in self.modes])

    @property
    def beta(self):
        return np.array([m.beta for m in self.modes])

    @property
    def gamma(self):
        return np.array([m.gamma for m in self.modes])

    @property
    def damping_class(self):
        return tuple(m.kind for m in self.modes)

    @property
    def norm_product(self):
        return float(np.linalg.norm(self.U, 2) ** 2)

    def eigenvalues(self):
        return np.concatenate([m.eigenvalues for m in self.modes])


def _undamped_modes(sys):
    w2, U = la.eigh(sys.K, sys.M)
    if np.any(w2 <= 1e-12 * max(1.0, abs(w2).max())):
        raise ResonanceError("rigid-body mode (zero natural frequency)")
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(U.shape[1])])
    return np.sqrt(w2), U


def check_proportional_damping(sys, rtol=1e-10):
    _, U = _undamped_modes(sys)
    D = U.T @ sys.C @ U
    off = D - np.diag(np.diag(D))
    scale = max(np.abs(D).max(), np.abs(sys.C).max(), 1e-300)
    return bool(np.abs(off).max() <= rtol * scale)


def modal_decompose_second_order(sys):
    if not check_proportional_damping(sys):
        raise ProportionalityError("damping matrix is not diagonalized by the undamped modes")
    omega0, U = _undamped_modes(sys)
    zeta = np.diag(U.T @ sys.C @ U) / (2.0 * omega0)
    modes = tuple(Mode.from_frequency(w, z) for w, z in zip(omega0, zeta))
    U.setflags(write=False)
    return ModalBasisSecondOrder(U, omega0, zeta, modes)
