"""Closed-form periodic Green's functions, amplification factors and bounds.

All kernel evaluators are vectorized over ``t``. The Heaviside step follows
``h(0) = 1``; pass ``h`` explicitly to select a one-sided limit at ``t = 0``.
"""
from __future__ import annotations

import numpy as np

from .errors import InternalError, ResonanceError, StabilityError

RESONANCE_TOL = 1e-14


def _heaviside(t, h):
    if h is None:
        return (np.asarray(t) >= 0).astype(float)
    return np.broadcast_to(np.asarray(h, dtype=float), np.shape(t))


def _check_first_order(lam, T):
    one_minus = 1.0 - np.exp(lam * T)
    if np.any(np.abs(one_minus) < RESONANCE_TOL):
        raise ResonanceError(f"eigenvalue {lam} resonant with period {T}")
    return one_minus


# ---------------------------------------------------------------- first order

def green_first_order(lam, t, T, h=None):
    """Periodic Green's function ``G(t, T)`` of ``wd = lam w + p``."""
    lam = complex(lam)
    t = np.asarray(t, dtype=float)
    one_minus = _check_first_order(lam, T)
    E = np.exp(lam * T)
    return np.exp(lam * t) * (E / one_minus + _heaviside(t, h))


def dgreen_first_order_dT(lam, t, T):
    lam = complex(lam)
    t = np.asarray(t, dtype=float)
    one_minus = _check_first_order(lam, T)
    return lam * np.exp(lam * t) * np.exp(lam * T) / one_minus ** 2


def gamma_T(lambdas, T):
    """Upper bound of ``max_t int_0^T |G(t - s, T)| ds`` over all modes."""
    lambdas = np.asarray(lambdas, dtype=complex)
    E = np.exp(lambdas * T)
    one_minus = np.abs(1.0 - E)
    if np.any(one_minus < RESONANCE_TOL):
        raise ResonanceError(f"resonant eigenvalue for period {T}")
    return float(np.max(T * np.maximum(np.abs(E), 1.0) / one_minus))


def amp_factor_first_order(lam, freq):
    den = 1j * np.asarray(freq, dtype=float) - complex(lam)
    if np.any(np.abs(den) < RESONANCE_TOL):
        raise ResonanceError(f"eigenvalue {lam} resonant with frequency {freq}")
    return 1.0 / den


def h_max(lambdas):
    """``sup_freq max_j |1 / (i freq - lam_j)| = 1 / min_j |Re lam_j|``."""
    re = np.real(np.asarray(lambdas, dtype=complex))
    if np.any(re >= 0):
        raise StabilityError("h_max requires Re(lambda) < 0 for every mode")
    return float(1.0 / np.min(np.abs(re)))


# ------------------------------------------------------- second order, modal

def _under_den(a, w, T):
    den = 1.0 + np.exp(2 * a * T) - 2 * np.exp(a * T) * np.cos(w * T)
    if den < RESONANCE_TOL ** 2:
        raise ResonanceError(f"mode (alpha={a}, omega={w}) resonant with period {T}")
    return den


def _one_minus(r, T):
    val = 1.0 - np.exp(r * T)
    if abs(val) < RESONANCE_TOL:
        raise ResonanceError(f"modal root {r} resonant with period {T}")
    return val


def _branch(mode):
    if mode.kind not in ("under", "critical", "over"):
        raise InternalError(f"unknown damping class {mode.kind!r}")
    if mode.kind == "under" and not mode.omega > 0:
        raise InternalError("underdamped branch with zero damped frequency")
    if mode.kind == "over" and not mode.beta != mode.gamma:
        raise InternalError("overdamped branch with coincident roots")
    return mode.kind


def green_position(mode, t, T, h=None):
    """Periodic Green's function ``L(t, T)`` mapping modal force to displacement."""
    t = np.asarray(t, dtype=float)
    H = _heaviside(t, h)
    kind = _branch(mode)
    if kind == "under":
        a, w = mode.alpha, mode.omega
        D = _under_den(a, w, T)
        eT = np.exp(a * T)
        per = eT * (np.sin(w * (T + t)) - eT * np.sin(w * t)) / D
        return np.exp(a * t) / w * (per + H * np.sin(w * t))
    if kind == "critical":
        a = mode.alpha
        om = _one_minus(a, T)
        return (np.exp(a * (T + t)) * (om * t + T) / om ** 2
                + H * t * np.exp(a * t))
    b, g = mode.beta, mode.gamma
    omb, omg = _one_minus(b, T), _one_minus(g, T)
    return (np.exp(b * (T + t)) / omb - np.exp(g * (T + t)) / omg
            + H * (np.exp(b * t) - np.exp(g * t))) / (b - g)


def green_velocity(mode, t, T, h=None):
    """Velocity kernel ``J(t, T) = dL/dt`` (jump of one at ``t = 0``)."""
    t = np.asarray(t, dtype=float)
    H = _heaviside(t, h)
    kind = _branch(mode)
    if kind == "under":
        a, w = mode.alpha, mode.omega
        D = _under_den(a, w, T)
        eT = np.exp(a * T)
        per = eT * (w * (np.cos(w * (T + t)) - eT * np.cos(w * t))
                    + a * (np.sin(w * (T + t)) - eT * np.sin(w * t))) / D
        return np.exp(a * t) / w * (per + H * (w * np.cos(w * t) + a * np.sin(w * t)))
    if kind == "critical":
        a = mode.alpha
        om = _one_minus(a, T)
        return (np.exp(a * (T + t)) * (om * (1 + a * t) + a * T) / om ** 2
                + H * (1 + a * t) * np.exp(a * t))
    b, g = mode.beta, mode.gamma
    omb, omg = _one_minus(b, T), _one_minus(g, T)
    return (b * np.exp(b * (T + t)) / omb - g * np.exp(g * (T + t)) / omg
            + H * (b * np.exp(b * t) - g * np.exp(g * t))) / (b - g)


def dgreen_position_dT(mode, t, T):
    """Derivative of ``L(t, T)`` with respect to the period at fixed ``t``."""
    t = np.asarray(t, dtype=float)
    kind = _branch(mode)
    if kind == "under":
        a, w = mode.alpha, mode.omega
        D = _under_den(a, w, T)
        eT = np.exp(a * T)
        bracket = (w * np.cos(w * (T + t)) + a * np.sin(w * (T + t))
                   - 2 * eT * (w * np.cos(w * t) + a * np.sin(w * t))
                   + eT ** 2 * (a * np.sin(w * (t - T)) + w * np.cos(w * (t - T))))
        return np.exp(a * (t + T)) / (w * D ** 2) * bracket
    if kind == "critical":
        a = mode.alpha
        om = _one_minus(a, T)
        E = 1.0 - om
        return a * np.exp(a * (t + T)) / om ** 2 * (
            om * t + T - E * t + 1.0 / a + 2 * E * (om * t + T) / om)
    b, g = mode.beta, mode.gamma
    omb, omg = _one_minus(b, T), _one_minus(g, T)
    Eb, Eg = 1.0 - omb, 1.0 - omg
    den = omb * omg
    num = np.exp(b * (T + t)) * omg - np.exp(g * (T + t)) * omb
    first = ((b - (g + b) * Eg) * np.exp(b * (T + t))
             + ((g + b) * Eb - g) * np.exp(g * (T + t))) / den
    second = num * (g * Eg + b * Eb - (g + b) * Eb * Eg) / den ** 2
    return (first + second) / (b - g)


def amp_factor_position(mode, freq):
    """Modal amplification ``Q`` for forcing ``exp(i freq t)``."""
    iw = 1j * np.asarray(freq, dtype=float)
    kind = _branch(mode)
    if kind == "under":
        den = (iw - mode.alpha) ** 2 + mode.omega ** 2
    elif kind == "critical":
        den = (iw - mode.alpha) ** 2
    else:
        den = (mode.beta - iw) * (mode.gamma - iw)
    if np.any(np.abs(den) < RESONANCE_TOL):
        raise ResonanceError(f"mode resonant with frequency {freq}")
    return 1.0 / den


def q_max(modes):
    """``sup_freq max_j |Q_j(freq)|`` in closed form."""
    best = 0.0
    for m in modes:
        if m.alpha >= 0:
            raise StabilityError("q_max requires strictly damped modes")
        if m.kind == "under" and m.omega0 ** 2 > 2 * m.alpha ** 2:
            val = 1.0 / (2 * abs(m.alpha) * m.omega)
        else:
            val = 1.0 / m.omega0 ** 2
        best = max(best, val)
    return best


def gamma_position(modes, T, kernel="L", samples=4096):
    """``int_0^T max_j |K_j(s, T)| ds`` for ``K`` in {L, J}.

    Bounds the sup-norm gain of the diagonal modal convolution. Evaluated by
    midpoint quadrature on a dense grid and inflated by 1% for the residual
    quadrature error.
    """
    fun = green_position if kernel == "L" else green_velocity
    s = (np.arange(samples) + 0.5) * T / samples
    vals = np.max(np.abs(np.stack([fun(m, s, T) for m in modes])), axis=0)
    return float(1.01 * vals.sum() * T / samples)


def fundamental_matrix(mode, t):
    """``N(t) = exp(A_j t)`` for the modal companion matrix; shape (..., 2, 2)."""
    t = np.asarray(t, dtype=float)
    kind = _branch(mode)
    out = np.empty(t.shape + (2, 2))
    if kind == "under":
        a, w = mode.alpha, mode.omega
        e, c, s = np.exp(a * t) / w, np.cos(w * t), np.sin(w * t)
        out[..., 0, 0] = e * (w * c - a * s)
        out[..., 0, 1] = e * s
        out[..., 1, 0] = -e * (a * a + w * w) * s
        out[..., 1, 1] = e * (w * c + a * s)
    elif kind == "critical":
        a = mode.alpha
        e = np.exp(a * t)
        out[..., 0, 0] = e - a * t * e
        out[..., 0, 1] = t * e
        out[..., 1, 0] = -a * a * t * e
        out[..., 1, 1] = e + a * t * e
    else:
        a, b, g = mode.alpha, mode.beta, mode.gamma
        eb, eg = np.exp(b * t), np.exp(g * t)
        out[..., 0, 0] = b * eg - g * eb
        out[..., 0, 1] = eb - eg
        out[..., 1, 0] = g * b * (eg - eb)
        out[..., 1, 1] = b * eb - g * eg
        out /= (b - g)
    return out
