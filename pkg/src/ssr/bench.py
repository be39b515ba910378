"""Benchmark models and an independent time-integration oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, TransientNotDecayed
from .forcing import harmonic_forcing, qper_forcing  # noqa: F401  (re-exported)
from .model import MechanicalSystem, Nonlinearity


def cubic_spring(coeff, n=2, dof=0):
    """``S_dof(x) = coeff x_dof^3``; other components vanish."""

    def force(x, v=None):
        out = np.zeros_like(x)
        out[..., dof] = coeff * x[..., dof] ** 3
        return out

    def jac(x, v=None):
        out = np.zeros(np.shape(x) + (n,))
        out[..., dof, dof] = 3 * coeff * x[..., dof] ** 2
        return out

    return Nonlinearity(force, jac_x=jac,
                        potential=lambda x: 0.25 * coeff * x[..., dof] ** 4,
                        lipschitz=lambda r: 3 * abs(coeff) * r ** 2,
                        name=f"cubic({coeff})")


def play_spring(alpha, beta, n=2, dof=0):
    """Spring with play: ``alpha sign(q)(|q| - beta)`` outside ``|q| <= beta``.

    The Jacobian uses the outside slope at the kink ``|q| = beta``.
    """
    if beta <= 0:
        raise ModelError("play width beta must be positive")

    def force(x, v=None):
        q = x[..., dof]
        out = np.zeros_like(x)
        out[..., dof] = np.where(np.abs(q) > beta, alpha * np.sign(q) * (np.abs(q) - beta), 0.0)
        return out

    def jac(x, v=None):
        out = np.zeros(np.shape(x) + (n,))
        out[..., dof, dof] = np.where(np.abs(x[..., dof]) >= beta, alpha, 0.0)
        return out

    def potential(x):
        excess = np.maximum(np.abs(x[..., dof]) - beta, 0.0)
        return 0.5 * alpha * excess ** 2

    return Nonlinearity(force, jac_x=jac, potential=potential,
                        lipschitz=lambda r: abs(alpha), name=f"play({alpha},{beta})")


def build_two_dof(m=1.0, k=1.0, c=0.3, nl=None):
    """Two masses between walls, three springs and three dampers.

    ``nl`` is a :class:`Nonlinearity`, a cubic coefficient (float) or None.
    """
    if m <= 0 or k <= 0 or c < 0:
        raise ModelError("need m, k > 0 and c >= 0")
    if nl is not None and not isinstance(nl, Nonlinearity):
        nl = cubic_spring(float(nl))
    pattern = np.array([[2.0, -1.0], [-1.0, 2.0]])
    return MechanicalSystem(m * np.eye(2), c * pattern, k * pattern, nl)


def _grounded_difference(n):
    """``(n+1) x n`` matrix mapping ``x`` to the spring elongations of a grounded chain."""
    D = np.zeros((n + 1, n))
    D[0, 0] = 1.0
    for j in range(1, n):
        D[j, j] = 1.0
        D[j, j - 1] = -1.0
    D[n, n - 1] = -1.0
    return D


def chain_nonlinearity(n, kappa):
    """Gradient of ``V(x) = kappa/4 [x_1^4 + sum_j (x_j - x_{j-1})^4 + x_n^4]``."""
    D = _grounded_difference(n)

    def force(x, v=None):
        y = x @ D.T
        return kappa * (y ** 3) @ D

    def jac(x, v=None):
        y = x @ D.T
        return np.einsum("ia,...i,ib->...ab", D, 3 * kappa * y ** 2, D)

    def potential(x):
        return 0.25 * kappa * np.sum((x @ D.T) ** 4, axis=-1)

    # ||D|| <= 2 and |y_i| <= ||D x|| <= 2 r
    return Nonlinearity(force, jac_x=jac, potential=potential,
                        lipschitz=lambda r: 48 * abs(kappa) * r ** 2, name=f"chain({kappa})")


def build_chain(n=20, m=1.0, k=1.0, c=1.0, kappa=0.5):
    """Grounded chain of ``n`` masses with linear and cubic coupling springs."""
    if n < 2:
        raise ModelError("chain needs at least two masses")
    D = _grounded_difference(n)
    pattern = D.T @ D
    return MechanicalSystem(m * np.eye(n), c * pattern, k * pattern, chain_nonlinearity(n, kappa))


# ------------------------------------------------------------------ oracle

@dataclass
class OracleResult:
    """Final window of a long time integration.

    Attributes
    ----------
    t, x, v : ndarray
        Samples of the last window (``x`` and ``v`` have shape ``(steps, n)``).
    amplitude : ndarray
        Per-dof maximum ``|x|`` over the last window (band-limited
        interpolation for periodic windows).
    decay_metric : float
        Relative amplitude change between the last two windows.
    windows : int
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    amplitude: np.ndarray
    decay_metric: float
    windows: int


def _rk4_window(sys, forcing, t0, y, h, steps):
    n = sys.n
    Minv = np.linalg.inv(sys.M)
    MC, MK = Minv @ sys.C, Minv @ sys.K
    nl = sys.nonlinearity.force
    pos_only = sys.position_only
    times = t0 + h * np.arange(2 * steps + 1) / 2.0
    if forcing is None:
        fs = np.zeros((len(times), n))
    else:
        fs = forcing.evaluate(times) @ Minv.T
    xs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    x, v = y[:n].copy(), y[n:].copy()
    xs[0], vs[0] = x, v

    def acc(x, v, f):
        s = nl(x, None if pos_only else v)
        return f - MC @ v - MK @ x - Minv @ s

    for i in range(steps):
        f0, fh, f1 = fs[2 * i], fs[2 * i + 1], fs[2 * i + 2]
        k1x, k1v = v, acc(x, v, f0)
        x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
        k2x, k2v = v2, acc(x2, v2, fh)
        x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
        k3x, k3v = v3, acc(x3, v3, fh)
        x4, v4 = x + h * k3x, v + h * k3v
        k4x, k4v = v4, acc(x4, v4, f1)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[i + 1], vs[i + 1] = x, v
    return times[::2], xs, vs


def integrate(sys, forcing, x0, v0, t_end, h, t0=0.0):
    """Fixed-step RK4 from ``t0`` to ``t_end``; returns ``(t, x, v)``."""
    steps = int(np.ceil((t_end - t0) / h - 1e-9))
    y = np.concatenate([np.asarray(x0, float), np.asarray(v0, float)])
    return _rk4_window(sys, forcing, t0, y, (t_end - t0) / steps, steps)


def time_march_oracle(sys, forcing, horizon_periods=5000, transient_tol=1e-6,
                      steps_per_period=200, x0=None, v0=None, min_windows=3):
    """Integrate ``M xdd + C xd + K x + S = f`` until the response is stationary.

    The window is one period of the slowest base frequency of ``forcing``.
    Integration stops once the per-dof window amplitudes change by at most
    ``transient_tol`` (relative) between consecutive windows.

    Raises
    ------
    TransientNotDecayed
        The criterion is not met within ``horizon_periods`` windows.
    """
    n = sys.n
    window = 2 * np.pi / min(forcing.Omega)
    shortest = 2 * np.pi / max(forcing.Omega)
    steps = int(np.ceil(steps_per_period * window / shortest))
    h = window / steps
    y = np.zeros(2 * n)
    if x0 is not None:
        y[:n] = x0
    if v0 is not None:
        y[n:] = v0
    prev = None
    t0 = 0.0
    metric = np.inf
    for w in range(1, horizon_periods + 1):
        t, xs, vs = _rk4_window(sys, forcing, t0, y, h, steps)
        y = np.concatenate([xs[-1], vs[-1]])
        t0 = t[-1]
        amp = np.max(np.abs(xs), axis=0)
        if prev is not None:
            metric = float(np.max(np.abs(amp - prev)) / max(np.max(amp), 1e-300))
            if metric <= transient_tol and w >= min_windows:
                if forcing.k == 1:
                    from .discretization import upsampled_max
                    amp = upsampled_max(xs[:-1], 16)
                return OracleResult(t, xs, vs, amp, metric, w)
        prev = amp
    res = OracleResult(t, xs, vs, amp, metric, horizon_periods)
    raise TransientNotDecayed(f"amplitude change {metric:.2e} after {horizon_periods} windows", res)


def measure_period(sys, x0, v0, T_guess, periods=10, steps_per_period=400, dof=0):
    """Mean period of a free (unforced) motion from upward velocity zero crossings."""
    h = T_guess / steps_per_period
    t, xs, vs = integrate(sys, None, x0, v0, periods * T_guess + 0.5 * T_guess, h)
    s = vs[:, dof]
    idx = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    if len(idx) < 2:
        raise ModelError("motion does not oscillate")
    # linear interpolation of the crossing instants
    tc = t[idx] - s[idx] * (t[idx + 1] - t[idx]) / (s[idx + 1] - s[idx])
    return float(np.mean(np.diff(tc))), (t, xs, vs)
