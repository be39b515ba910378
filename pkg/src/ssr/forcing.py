"""Finite Fourier forcing tables and truncated frequency index sets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DiscretizationError, ModelError


def _kappa(key):
    return tuple(int(v) for v in np.atleast_1d(key))


@dataclass(frozen=True)
class ForcingSpec:
    """Quasi-periodic forcing ``f(t) = sum_kappa F_kappa exp(i <kappa, Omega> t)``.

    Parameters
    ----------
    Omega : array_like, shape (k,)
        Base frequencies.
    table : dict
        Map from integer tuples ``kappa`` (length ``k``) to complex n-vectors.
        The table must be conjugate symmetric so that the forcing is real.
    """

    Omega: tuple
    table: dict

    def __post_init__(self):
        Omega = tuple(float(w) for w in np.atleast_1d(self.Omega))
        if any(w <= 0 for w in Omega):
            raise ModelError("base frequencies must be positive")
        table = {}
        for key, val in self.table.items():
            kap = _kappa(key)
            if len(kap) != len(Omega):
                raise ModelError(f"index {kap} does not match {len(Omega)} base frequencies")
            table[kap] = np.asarray(val, dtype=complex)
        for kap, val in table.items():
            neg = tuple(-v for v in kap)
            if neg not in table or not np.allclose(table[neg], np.conj(val), rtol=1e-12, atol=1e-15):
                raise ModelError(f"forcing table not conjugate symmetric at {kap}")
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "table", table)

    @property
    def k(self):
        return len(self.Omega)

    @property
    def n(self):
        return len(next(iter(self.table.values()))) if self.table else 0

    @property
    def max_index(self):
        return max((max(abs(v) for v in kap) for kap in self.table), default=0)

    def frequency(self, kappa):
        return float(np.dot(kappa, self.Omega))

    def with_omega(self, Omega):
        return ForcingSpec(tuple(np.atleast_1d(Omega)), dict(self.table))

    def scaled(self, factor):
        return ForcingSpec(self.Omega, {k: factor * v for k, v in self.table.items()})

    def evaluate(self, t):
        """Real forcing samples, shape ``t.shape + (n,)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.n,), dtype=complex)
        for kap, val in self.table.items():
            out += np.exp(1j * self.frequency(kap) * t)[..., None] * val
        return out.real

    def phase_samples(self, sigma):
        """Samples of a periodic (``k = 1``) forcing at phases ``sigma`` in [0, 1)."""
        if self.k != 1:
            raise ModelError("phase samples need a single base frequency")
        return self.evaluate(np.asarray(sigma) * 2 * np.pi / self.Omega[0])

    def torus_samples(self, N):
        """Samples on the uniform torus grid with ``N`` nodes per angle.

        Returns an array of shape ``(N,) * k + (n,)``.
        """
        theta = 2 * np.pi * np.arange(N) / N
        grids = np.meshgrid(*([theta] * self.k), indexing="ij")
        out = np.zeros((N,) * self.k + (self.n,), dtype=complex)
        for kap, val in self.table.items():
            phase = sum(kk * g for kk, g in zip(kap, grids))
            out += np.exp(1j * phase)[..., None] * val
        return out.real

    def coefficient_array(self, N):
        """Coefficients placed on an FFT-ordered torus array of size ``N`` per axis."""
        out = np.zeros((N,) * self.k + (self.n,), dtype=complex)
        for kap, val in self.table.items():
            if any(2 * abs(v) >= N for v in kap):
                raise DiscretizationError(f"forcing index {kap} does not fit torus grid N={N}")
            out[tuple(v % N for v in kap)] += val
        return out


def harmonic_forcing(amplitudes, Omega):
    """``f(t) = amplitudes * sin(Omega t)``."""
    a = np.asarray(amplitudes, dtype=float)
    return ForcingSpec((Omega,), {(1,): -0.5j * a, (-1,): 0.5j * a})


def qper_forcing(Omega1, Omega2, amplitude=0.01, n=2, dof=0):
    """``f_dof(t) = amplitude (sin(Omega1 t) + sin(Omega2 t))``, other dofs unforced."""
    e = np.zeros(n)
    e[dof] = amplitude
    return ForcingSpec((Omega1, Omega2), {
        (1, 0): -0.5j * e, (-1, 0): 0.5j * e,
        (0, 1): -0.5j * e, (0, -1): 0.5j * e,
    })


@dataclass(frozen=True)
class FrequencyIndexSet:
    """Box-truncated index set ``|kappa_i| <= K`` over base frequencies ``Omega``."""

    Omega: tuple
    K: int

    def __post_init__(self):
        Omega = tuple(float(w) for w in np.atleast_1d(self.Omega))
        object.__setattr__(self, "Omega", Omega)
        if self.K < 0:
            raise DiscretizationError("truncation order must be nonnegative")
        for kap in self.indices:
            if any(kap) and abs(self.frequency(kap)) <= 1e-12:
                raise DiscretizationError(f"combination frequency vanishes at {kap}: "
                                          "base frequencies are commensurate")

    @property
    def k(self):
        return len(self.Omega)

    @property
    def indices(self):
        rng = range(-self.K, self.K + 1)
        return list(itertools.product(rng, repeat=self.k))

    def frequency(self, kappa):
        return float(np.dot(kappa, self.Omega))

    def period(self, kappa):
        f = self.frequency(kappa)
        return np.inf if f == 0 else 2 * np.pi / abs(f)

    @property
    def grid_size(self):
        """Torus nodes per angle, ``2 K + 2``."""
        return 2 * self.K + 2

    def fft_integers(self, N=None):
        """Integer index of every FFT bin along one axis."""
        N = self.grid_size if N is None else N
        return np.fft.fftfreq(N, 1.0 / N).astype(int)

    def frequency_grid(self, N=None):
        """Combination frequencies ``<kappa, Omega>`` on the FFT-ordered torus array."""
        ints = self.fft_integers(N)
        grids = np.meshgrid(*([ints] * self.k), indexing="ij")
        return sum(w * g for w, g in zip(self.Omega, grids))

    def mask(self, N=None):
        """Boolean FFT-ordered mask of the box ``|kappa_i| <= K``."""
        ints = np.abs(self.fft_integers(N))
        grids = np.meshgrid(*([ints] * self.k), indexing="ij")
        out = np.ones(grids[0].shape, dtype=bool)
        for g in grids:
            out &= g <= self.K
        return out

    def shell(self, N=None):
        """Mask of the outermost shell ``max_i |kappa_i| = K``."""
        ints = np.abs(self.fft_integers(N))
        grids = np.meshgrid(*([ints] * self.k), indexing="ij")
        return self.mask(N) & (np.max(np.stack(grids), axis=0) == self.K)
