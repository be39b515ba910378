"""Collocation and Fourier-Galerkin discretizations of the integral equations.

Periodic problems live on a uniform grid ``t_j = j T / m``. Because every
kernel depends on ``t - s`` only, the discretized convolution is block
circulant over the nodes and is applied with FFTs in modal coordinates.
Nodal vectors are laid out node-major: entry ``j * d + a`` holds component
``a`` at node ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DiscretizationError, ResonanceError
from .forcing import FrequencyIndexSet
from .model import ModalBasisFirstOrder, ModalBasisSecondOrder

SCHEMES = ("trapezoid", "spectral")


@dataclass(frozen=True)
class CollocationGrid:
    m: int
    T: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 8:
            raise DiscretizationError(f"grid needs m >= 8 nodes, got {self.m}")
        if not self.T > 0:
            raise DiscretizationError("period must be positive")

    @property
    def delta(self):
        return self.T / self.m

    @property
    def nodes(self):
        return np.arange(self.m) * self.delta

    @property
    def sigma(self):
        return np.arange(self.m) / self.m

    @property
    def weights(self):
        # periodic split trapezoid: the two half weights at the jump add up
        return np.full(self.m, self.delta)


# ------------------------------------------------------------- modal routes

def _route(basis, kernel):
    """Return ``(Vout, Win, modal_count, kernel)`` for a modal basis."""
    if isinstance(basis, ModalBasisFirstOrder):
        if kernel not in (None, "G"):
            raise ValueError(f"first-order basis only supports kernel G, got {kernel!r}")
        return basis.V, basis.W, basis.dim, "G"
    if isinstance(basis, ModalBasisSecondOrder):
        kernel = "L" if kernel is None else kernel
        if kernel not in ("L", "J"):
            raise ValueError(f"second-order basis supports kernels L and J, got {kernel!r}")
        return basis.U, basis.U.T, basis.n, kernel
    raise TypeError(f"unsupported basis type {type(basis).__name__}")


def amplification_symbols(basis, freqs, kernel=None):
    """Modal gains at the frequencies ``freqs``; shape ``freqs.shape + (r,)``.

    ``G`` gives ``H``, ``L`` gives ``Q`` and ``J`` gives ``i freq Q``.
    """
    _, _, r, kernel = _route(basis, kernel)
    freqs = np.asarray(freqs, dtype=float)
    out = np.empty(freqs.shape + (r,), dtype=complex)
    if kernel == "G":
        den = 1j * freqs[..., None] - basis.lambdas
        bad = np.abs(den) < kernels.RESONANCE_TOL
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise ResonanceError(f"resonance at frequency {freqs[tuple(idx[:-1])]}",
                                 kappa=tuple(idx[:-1]))
        return 1.0 / den
    for j, mode in enumerate(basis.modes):
        out[..., j] = kernels.amp_factor_position(mode, freqs)
    if kernel == "J":
        out *= 1j * freqs[..., None]
    return out


def _kernel_values(basis, kernel, t, T, h=None):
    """Modal kernel values at times ``t``; shape ``t.shape + (r,)``."""
    if kernel == "G":
        return np.stack([kernels.green_first_order(lam, t, T, h) for lam in basis.lambdas], axis=-1)
    fun = kernels.green_position if kernel == "L" else kernels.green_velocity
    return np.stack([fun(mode, t, T, h) for mode in basis.modes], axis=-1)


def _kernel_dT(basis, kernel, t, T):
    if kernel == "G":
        return np.stack([kernels.dgreen_first_order_dT(lam, t, T) for lam in basis.lambdas], axis=-1)
    if kernel == "L":
        return np.stack([kernels.dgreen_position_dT(mode, t, T) for mode in basis.modes], axis=-1)
    raise ValueError("period derivative is available for kernels G and L")


def _kernel_dt(basis, kernel, t, T, h=None):
    """Time derivative of the kernel away from the jump."""
    if kernel == "G":
        return _kernel_values(basis, "G", t, T, h) * basis.lambdas
    if kernel == "L":
        return _kernel_values(basis, "J", t, T, h)
    raise ValueError("time derivative is available for kernels G and L")


def kernel_columns(basis, T, m, kernel=None):
    """First columns ``c[l] = Delta K(l Delta)`` of the split-trapezoid circulant.

    At ``l = 0`` the two one-sided limits are averaged, which is what the
    trapezoid rule gives when the integral is split at the jump ``s = t``.
    """
    _, _, _, kernel = _route(basis, kernel)
    delta = T / m
    t = np.arange(m) * delta
    c = _kernel_values(basis, kernel, t, T)
    c[0] = 0.5 * (_kernel_values(basis, kernel, np.zeros(1), T, h=1.0)[0]
                  + _kernel_values(basis, kernel, np.zeros(1), T, h=0.0)[0])
    return delta * c


def kernel_columns_dT(basis, T, m, kernel=None):
    """Derivative of :func:`kernel_columns` with respect to ``T`` at fixed phase ``l / m``."""
    _, _, _, kernel = _route(basis, kernel)
    delta = T / m
    ell = np.arange(m)
    t = ell * delta
    vals = _kernel_values(basis, kernel, t, T)
    dt = _kernel_dt(basis, kernel, t, T)
    dT = _kernel_dT(basis, kernel, t, T)
    z = np.zeros(1)
    vals[0] = 0.5 * (_kernel_values(basis, kernel, z, T, 1.0)[0] + _kernel_values(basis, kernel, z, T, 0.0)[0])
    dt[0] = 0.0
    return vals / m + delta * (ell / m)[:, None] * dt + delta * dT


def spectral_symbols(basis, T, m, kernel=None):
    """Circulant eigenvalues for the spectral scheme (exact gains, Nyquist bin zeroed)."""
    ints = np.fft.fftfreq(m, 1.0 / m)
    eig = amplification_symbols(basis, 2 * np.pi * ints / T, kernel)
    if m % 2 == 0:
        eig[m // 2] = 0.0
    return eig


@dataclass(frozen=True)
class ConvolutionOperator:
    """Discretized ``t -> int_0^T Vout K(t - s) Win p(s) ds`` on a uniform grid.

    Attributes
    ----------
    eig : ndarray, shape (m, r)
        Circulant eigenvalues per mode.
    Vout, Win : ndarray
        Modal synthesis ``(d, r)`` and projection ``(r, d)`` matrices.
    """

    eig: np.ndarray
    Vout: np.ndarray
    Win: np.ndarray
    T: float
    kernel: str
    scheme: str

    @property
    def m(self):
        return self.eig.shape[0]

    @property
    def d(self):
        return self.Vout.shape[0]

    @property
    def shape(self):
        return (self.m * self.d, self.m * self.d)

    def apply(self, p):
        """Apply to nodal samples ``p`` of shape ``(..., m, d)``."""
        q = np.asarray(p) @ self.Win.T
        y = np.fft.ifft(self.eig * np.fft.fft(q, axis=-2), axis=-2)
        return np.real(y @ self.Vout.T)

    def columns(self):
        """Per-mode circulant first columns."""
        return np.fft.ifft(self.eig, axis=0)

    def blocks(self):
        """``(m, d, d)`` real blocks; block ``l`` couples nodes ``i`` and ``i - l``."""
        c = self.columns()
        return np.real(np.einsum("ar,lr,rb->lab", self.Vout, c, self.Win))

    def dense(self):
        m, d = self.m, self.d
        blk = self.blocks()
        idx = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m
        return blk[idx].transpose(0, 2, 1, 3).reshape(m * d, m * d)


def build_convolution_operator(basis, T, m, kernel=None, scheme="trapezoid"):
    if scheme not in SCHEMES:
        raise DiscretizationError(f"unknown quadrature scheme {scheme!r}")
    Vout, Win, _, kernel = _route(basis, kernel)
    if scheme == "trapezoid":
        eig = np.fft.fft(kernel_columns(basis, T, m, kernel), axis=0)
    else:
        eig = spectral_symbols(basis, T, m, kernel)
    return ConvolutionOperator(eig, Vout, Win, float(T), kernel, scheme)


def build_convolution_operator_dT(basis, T, m, kernel=None, scheme="trapezoid"):
    """Operator obtained by differentiating every weight in ``T`` at fixed phase."""
    Vout, Win, _, kernel = _route(basis, kernel)
    if scheme == "trapezoid":
        eig = np.fft.fft(kernel_columns_dT(basis, T, m, kernel), axis=0)
    elif scheme == "spectral":
        ints = np.fft.fftfreq(m, 1.0 / m)
        freqs = 2 * np.pi * ints / T
        sym = amplification_symbols(basis, freqs, kernel)
        if kernel == "G":
            dsym = -1j * sym ** 2
        elif kernel == "L":
            # Q = 1/(w0^2 - f^2 + 2 i zeta w0 f)
            dsym = -sym ** 2 * (-2 * freqs[:, None] + 2j * basis.zeta * basis.omega0)
        else:
            raise ValueError("period derivative is available for kernels G and L")
        eig = dsym * (-freqs / T)[:, None]
        if m % 2 == 0:
            eig[m // 2] = 0.0
    else:
        raise DiscretizationError(f"unknown quadrature scheme {scheme!r}")
    return ConvolutionOperator(eig, Vout, Win, float(T), kernel + "_dT", scheme)


def assemble_convolution_operator(basis, grid, kernel=None, scheme="trapezoid"):
    """Dense ``(m d) x (m d)`` matrix of the discretized convolution."""
    return build_convolution_operator(basis, grid.T, grid.m, kernel, scheme).dense()


# ----------------------------------------------------------------- solutions

def sup_norm(samples):
    """Maximum over nodes of the Euclidean norm of the state."""
    samples = np.asarray(samples)
    return float(np.max(np.linalg.norm(samples.reshape(-1, samples.shape[-1]), axis=-1)))


def upsampled_max(samples, factor=8, axes=(0,)):
    """Per-component maximum of ``|x|`` after band-limited (FFT) upsampling."""
    samples = np.asarray(samples, dtype=float)
    spec = np.fft.fftn(samples, axes=axes)
    shape = list(samples.shape)
    for ax in axes:
        N = shape[ax]
        spec = _zero_pad(spec, ax, factor * N)
        shape[ax] = factor * N
    scale = np.prod([factor] * len(axes))
    fine = np.real(np.fft.ifftn(spec, axes=axes)) * scale
    return np.max(np.abs(fine), axis=tuple(axes))


def _zero_pad(spec, axis, new):
    N = spec.shape[axis]
    half = (N + 1) // 2
    shape = list(spec.shape)
    shape[axis] = new
    out = np.zeros(shape, dtype=complex)
    lo = [slice(None)] * spec.ndim
    hi = [slice(None)] * spec.ndim
    lo[axis] = slice(0, half)
    out[tuple(lo)] = spec[tuple(lo)]
    hi[axis] = slice(N - N // 2, N)
    tgt = list(hi)
    tgt[axis] = slice(new - N // 2, new)
    out[tuple(tgt)] = spec[tuple(hi)]
    if N % 2 == 0:
        # split the Nyquist bin evenly between both signs
        nyq = [slice(None)] * spec.ndim
        nyq[axis] = N // 2
        a = [slice(None)] * spec.ndim
        a[axis] = new - N // 2
        b = [slice(None)] * spec.ndim
        b[axis] = N // 2
        out[tuple(a)] = 0.5 * spec[tuple(nyq)]
        out[tuple(b)] = 0.5 * spec[tuple(nyq)]
    return out


@dataclass
class PeriodicSolution:
    """Nodal samples of a periodic response.

    ``samples`` has shape ``(m, d)``; ``route`` is ``"full"`` for the state
    ``z = (xdot, x)`` (``d = 2 n``) and ``"position"`` for ``x`` (``d = n``).
    """

    grid: CollocationGrid
    samples: np.ndarray
    route: str
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.grid.T

    @property
    def positions(self):
        if self.route == "full":
            return self.samples[:, self.samples.shape[1] // 2:]
        return self.samples

    @property
    def velocities(self):
        if self.route == "full":
            return self.samples[:, : self.samples.shape[1] // 2]
        if "velocities" in self.meta:
            return self.meta["velocities"]
        raise AttributeError("position-route solution has no stored velocities")

    def amplitude(self, upsample=8):
        """Per-dof maximum displacement magnitude."""
        return upsampled_max(self.positions, upsample)


@dataclass
class FourierSolution:
    """Torus response stored as samples on an ``N^k`` grid plus its index set."""

    index_set: FrequencyIndexSet
    samples: np.ndarray
    route: str
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.samples.shape[0]

    @property
    def coeffs(self):
        """FFT-ordered Fourier coefficients (normalized by ``N^k``)."""
        k = self.index_set.k
        return np.fft.fftn(self.samples, axes=tuple(range(k))) / self.N ** k

    def coefficient(self, kappa):
        return self.coeffs[tuple(int(v) % self.N for v in kappa)]

    def as_dict(self):
        c = self.coeffs
        return {kap: c[tuple(v % self.N for v in kap)] for kap in self.index_set.indices}

    @property
    def positions(self):
        if self.route == "full":
            return self.samples[..., self.samples.shape[-1] // 2:]
        return self.samples

    def amplitude(self, upsample=4):
        k = self.index_set.k
        return upsampled_max(self.positions, upsample, axes=tuple(range(k)))

    def evaluate(self, t):
        """Evaluate the physical-time signal ``u(Omega t)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.samples.shape[-1],), dtype=complex)
        for kap, val in self.as_dict().items():
            out += np.exp(1j * self.index_set.frequency(kap) * t)[..., None] * val
        return out.real


# ------------------------------------------------------------ torus machinery

def _torus_axes(k):
    return tuple(range(-k - 1, -1))


@dataclass(frozen=True)
class TorusOperator:
    """Galerkin convolution acting on torus samples of shape ``(..., N, ..., N, d)``."""

    eig: np.ndarray  # (N,)*k + (r,)
    Vout: np.ndarray
    Win: np.ndarray
    index_set: FrequencyIndexSet
    kernel: str

    @property
    def N(self):
        return self.eig.shape[0]

    @property
    def k(self):
        return self.index_set.k

    @property
    def d(self):
        return self.Vout.shape[0]

    def apply(self, p):
        axes = _torus_axes(self.k)
        q = np.asarray(p) @ self.Win.T
        y = np.fft.ifftn(self.eig * np.fft.fftn(q, axes=axes), axes=axes)
        return np.real(y @ self.Vout.T)

    def dense(self):
        size = self.N ** self.k * self.d
        eye = np.eye(size).reshape((size,) + (self.N,) * self.k + (self.d,))
        return self.apply(eye).reshape(size, size).T


def build_torus_operator(basis, index_set, kernel=None, N=None):
    Vout, Win, _, kernel = _route(basis, kernel)
    N = index_set.grid_size if N is None else N
    if N < 2 * index_set.K + 1:
        raise DiscretizationError(f"torus grid N={N} below the aliasing floor {2 * index_set.K + 1}")
    freqs = index_set.frequency_grid(N)
    mask = index_set.mask(N)
    try:
        eig = amplification_symbols(basis, np.where(mask, freqs, 0.0), kernel)
    except ResonanceError as exc:
        ints = index_set.fft_integers(N)
        kap = tuple(int(ints[i]) for i in exc.kappa) if exc.kappa is not None else None
        raise ResonanceError(f"resonant combination frequency at kappa={kap}", kappa=kap) from None
    eig = eig * mask[..., None]
    return TorusOperator(eig, Vout, Win, index_set, kernel)


def galerkin_apply(basis, index_set, coeffs_of_force, kernel=None):
    """Response coefficients ``Vout gain(<kappa, Omega>) Win F_kappa`` per index.

    ``coeffs_of_force`` is a dict ``kappa -> d-vector`` or an FFT-ordered
    array of shape ``(N,)*k + (d,)``. The output has the same form.
    """
    Vout, Win, _, kernel = _route(basis, kernel)
    as_dict = isinstance(coeffs_of_force, dict)
    if as_dict:
        out = {}
        for kap, val in coeffs_of_force.items():
            try:
                g = amplification_symbols(basis, np.array(index_set.frequency(kap)), kernel)
            except ResonanceError:
                raise ResonanceError(f"resonant combination frequency at kappa={kap}", kappa=kap) from None
            out[kap] = Vout @ (g * (Win @ np.asarray(val, dtype=complex)))
        return out
    arr = np.asarray(coeffs_of_force, dtype=complex)
    op = build_torus_operator(basis, index_set, kernel, N=arr.shape[0])
    return (op.eig * (arr @ op.Win.T)) @ op.Vout.T


def nonlinearity_fourier_coeffs(fun, coeffs, index_set, N=None):
    """Fourier coefficients of ``fun(u(theta))`` by uniform torus quadrature.

    ``coeffs`` is an FFT-ordered array of shape ``(N,)*k + (d,)``; the
    returned array has the same layout and is truncated to the index box.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    k = index_set.k
    N = coeffs.shape[0] if N is None else N
    if N < 2 * index_set.K + 1:
        raise DiscretizationError(f"torus grid N={N} below the aliasing floor {2 * index_set.K + 1}")
    if coeffs.shape[0] != N:
        raise DiscretizationError("coefficient array does not match the torus grid")
    axes = tuple(range(k))
    samples = np.real(np.fft.ifftn(coeffs, axes=axes)) * N ** k
    out = np.fft.fftn(fun(samples), axes=axes) / N ** k
    return out * index_set.mask(N)[..., None]


# --------------------------------------------------------------- refinement

def observed_order(deltas, errors):
    """Least-squares slope of ``log(error)`` against ``log(delta)``."""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])


def collocation_convergence_study(solve, m_list, reference=None):
    """Observed convergence order of a collocation solver.

    Parameters
    ----------
    solve : callable
        ``solve(m) -> PeriodicSolution``.
    m_list : sequence of int
        Grid sizes, each dividing the reference grid when no exact
        reference is supplied.
    reference : callable or PeriodicSolution, optional
        Exact solution ``reference(t) -> (m, d)`` or a fine-grid surrogate.
        Defaults to a surrogate on ``4 * max(m_list)`` nodes.

    Returns
    -------
    order : float
    errors : ndarray
    """
    sols = [solve(m) for m in m_list]
    if reference is None:
        reference = solve(4 * max(m_list))
    errors = []
    for m, sol in zip(m_list, sols):
        if callable(reference):
            ref = reference(sol.grid.nodes)
        else:
            stride = reference.grid.m // m
            if stride * m != reference.grid.m:
                raise DiscretizationError("reference grid must be a multiple of every study grid")
            ref = reference.samples[::stride]
        errors.append(sup_norm(sol.samples - ref))
    errors = np.asarray(errors)
    if np.all(errors == 0):
        return float("inf"), errors
    deltas = [sol.grid.delta for sol in sols]
    return observed_order(deltas, errors), errors
