"""Periodic sample grids on the torus C / (Z + tau Z) and FFT-based derivatives.

Fields are plain ``numpy`` arrays of shape ``(N, N)``; axis 0 runs over the
lattice coordinate ``x`` and axis 1 over ``y``, with ``z = x + tau*y``.  A field
is real-valued exactly when its dtype is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import evaluate, fiber_chain_factors

DERIVATIVE_KINDS = ("z", "zbar", "zzbar")


@dataclass(frozen=True)
class TorusGrid:
    """``N x N`` sample points ``(j/N, k/N)`` on the fundamental domain."""

    N: int = 64
    tau: complex = 1j
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tau", complex(self.tau))
        N = self.N
        if not isinstance(N, (int, np.integer)) or N < 8 or N & (N - 1):
            raise ValueError("resolution must be a power of two and at least 8")
        if not self.tau.imag > 0:
            raise ValueError("Im tau must be positive")

    @property
    def area(self) -> float:
        return self.tau.imag

    @property
    def shape(self):
        return (self.N, self.N)

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def index(self):
        """Integer sample indices ``(J, K)``."""
        return self._get(
            "index", lambda: np.meshgrid(np.arange(self.N), np.arange(self.N), indexing="ij")
        )

    @property
    def xy(self):
        J, K = self.index
        return J / self.N, K / self.N

    @property
    def z(self) -> np.ndarray:
        x, y = self.xy
        return x + self.tau * y

    def mode_angle(self, m: int, n: int) -> np.ndarray:
        """``2 pi (m x + n y)`` reduced exactly modulo ``2 pi`` on the grid."""
        J, K = self.index
        return 2 * np.pi * ((m * J + n * K) % self.N) / self.N

    def evaluate(self, expr, t: complex = 0j) -> np.ndarray:
        out = evaluate(expr, t, angle=self.mode_angle)
        return np.broadcast_to(out, self.shape).copy()

    def _symbols(self):
        def build():
            dxdz, dydz = fiber_chain_factors(self.tau)
            freq = np.fft.fftfreq(self.N, 1.0 / self.N)
            M, Nn = np.meshgrid(freq, freq, indexing="ij")
            w = M * dxdz + Nn * dydz
            dz = 2j * np.pi * w
            dzbar = 2j * np.pi * (M * np.conj(dxdz) + Nn * np.conj(dydz))
            # Nyquist column/row has no conjugate partner; odd derivatives drop it.
            nyq = (np.abs(M) == self.N // 2) | (np.abs(Nn) == self.N // 2)
            dz = np.where(nyq, 0, dz)
            dzbar = np.where(nyq, 0, dzbar)
            lap = -4 * np.pi**2 * np.abs(w) ** 2
            # conjugate partner of a Nyquist mode aliases onto a different
            # frequency pair when Re tau != 0; average so real fields stay real
            partner = lap[(-np.arange(self.N)) % self.N][:, (-np.arange(self.N)) % self.N]
            lap = 0.5 * (lap + partner)
            return {"z": dz, "zbar": dzbar, "zzbar": lap, "freq": (M, Nn)}

        return self._get("symbols", build)

    def symbol(self, which: str) -> np.ndarray:
        if which not in DERIVATIVE_KINDS:
            raise ValueError(f"unknown derivative {which!r}; expected one of {DERIVATIVE_KINDS}")
        return self._symbols()[which]

    @property
    def frequencies(self):
        return self._symbols()["freq"]

    def dz(self, f):
        return spectral_derivative(f, "z", self)

    def dzbar(self, f):
        return spectral_derivative(f, "zbar", self)

    def laplace(self, f):
        """``d^2/dz dzbar`` (a quarter of the flat Laplacian when tau = i)."""
        return spectral_derivative(f, "zzbar", self)

    def integrate(self, f):
        return integrate(f, self)

    def mean(self, f):
        return np.mean(f)


def _check_field(f, grid):
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("field has non-finite samples")
    return f


def spectral_derivative(f, which: str, grid: TorusGrid) -> np.ndarray:
    """Apply ``d/dz``, ``d/dzbar`` or ``d^2/dz dzbar`` via the FFT.

    Exact for modes ``exp(2 pi i (m x + n y))`` with ``|m|, |n| < N/2``.  The
    mixed second derivative has a real symbol, so real input yields real output.
    """
    f = _check_field(f, grid)
    sym = grid.symbol(which)
    if which == "zzbar":
        # real even symbol: real and imaginary parts never mix
        def apply(g):
            return np.fft.ifft2(np.fft.fft2(g) * sym).real

        if np.isrealobj(f):
            return apply(f)
        return apply(f.real) + 1j * apply(f.imag)
    return np.fft.ifft2(np.fft.fft2(f) * sym)


def integrate(f, grid: TorusGrid):
    """Trapezoidal rule ``(Im tau / N^2) * sum(f)``; spectrally accurate for smooth periodic f."""
    f = _check_field(f, grid)
    return grid.area * np.mean(f)


def dealias(f, grid: TorusGrid) -> np.ndarray:
    """Zero all Fourier modes outside the 2/3-rule band ``|m|, |n| <= N/3``."""
    f = _check_field(f, grid)
    M, Nn = grid.frequencies
    keep = (np.abs(M) <= grid.N // 3) & (np.abs(Nn) <= grid.N // 3)
    out = np.fft.ifft2(np.fft.fft2(f) * keep)
    return out.real if np.isrealobj(f) else out
