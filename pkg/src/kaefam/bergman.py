"""Weighted Bergman kernels on a disk chart.

For a strictly psh weight ``tau`` on ``|z| < R`` and ``m >= 1`` consider
holomorphic polynomials of degree ``<= D`` with the norm

    ||f||^2 = integral |f|^2 exp(-m tau - |z|^2) tau_zzbar dlambda.

The diagonal of the reproducing kernel ``K_m(x, x)`` is the supremum of
``|f(x)|^2`` over the unit ball, and ``(1/m) log K_m(x, x) -> tau(x)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import ConditioningFailure
from .expr import differentiate, evaluate, parse_potential

PIVOT_FLOOR = 1e-13


@dataclass(frozen=True)
class BergmanChart:
    radius: float
    weight: object
    m: int
    degree: int = 60
    quadrature: int = 256
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.weight, str):
            object.__setattr__(self, "weight", parse_potential(self.weight, "z", allow_modes=False))
        if not self.radius > 0:
            raise ValueError("chart radius must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.degree < 0 or self.quadrature < 4:
            raise ValueError("degree must be >= 0 and quadrature >= 4")

    def with_m(self, m: int) -> "BergmanChart":
        return BergmanChart(self.radius, self.weight, m, self.degree, self.quadrature)

    def tau(self, z) -> np.ndarray:
        return evaluate(self.weight, z).real

    def tau_zzbar(self, z) -> np.ndarray:
        lap = differentiate(differentiate(self.weight, "t"), "tbar")
        return evaluate(lap, z).real

    def nodes(self):
        """Polar tensor rule: Gauss-Legendre in ``r``, trapezoid in ``theta``.

        Returns points and weights for ``dlambda = r dr dtheta``.
        """
        if "nodes" not in self._cache:
            q = self.quadrature
            s, ws = np.polynomial.legendre.leggauss(q)
            r = 0.5 * self.radius * (s + 1)
            wr = 0.5 * self.radius * ws * r
            theta = 2 * np.pi * np.arange(q) / q
            z = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
            w = (wr[:, None] * np.full(q, 2 * np.pi / q)[None, :]).ravel()
            self._cache["nodes"] = (z, w)
        return self._cache["nodes"]


def gram_matrix(chart: BergmanChart) -> np.ndarray:
    """``G[j, k] = integral z^j conj(z)^k exp(-m tau - |z|^2) tau_zzbar dlambda``."""
    if chart.quadrature <= chart.degree:
        # q-point trapezoid in theta cannot separate z^j from z^(j+q)
        q = chart.quadrature
        raise ConditioningFailure(
            f"monomial degree {q} aliases degree 0 on {q} angular nodes; "
            f"raise quadrature above {chart.degree} or lower the degree",
            q,
        )
    z, w = chart.nodes()
    lap = chart.tau_zzbar(z)
    if np.min(lap) <= 0:
        raise ValueError("weight is not strictly plurisubharmonic on the chart")
    # shift the exponent so the largest weight is 1; undone in the log
    expo = -chart.m * chart.tau(z) - np.abs(z) ** 2
    shift = float(np.max(expo))
    mu = w * np.exp(expo - shift) * lap
    V = z[:, None] ** np.arange(chart.degree + 1)[None, :]
    G = V.T @ (mu[:, None] * np.conj(V))
    return G, shift


def _factor(G: np.ndarray):
    """Cholesky of the diagonally scaled Gram matrix; returns ``(L, scale)``."""
    herm_err = np.max(np.abs(G - G.conj().T))
    if herm_err > 1e-12 * np.max(np.abs(G)):
        raise ValueError(f"Gram matrix is not Hermitian (error {herm_err:.2e})")
    d = np.real(np.diag(G))
    if np.any(d <= 0):
        bad = int(np.argmax(d <= 0))
        raise ConditioningFailure(f"monomial z^{bad} has vanishing norm", bad)
    scale = 1.0 / np.sqrt(d)
    Gs = G * scale[:, None] * scale[None, :]
    L, info = lapack.zpotrf(Gs, lower=1, clean=1)
    if info > 0:
        raise ConditioningFailure(
            f"Gram matrix not positive definite at monomial degree {info - 1}; "
            "lower the degree or refine the quadrature",
            info - 1,
        )
    piv = np.abs(np.diag(L)) ** 2
    if np.min(piv) < PIVOT_FLOOR:
        bad = int(np.argmax(piv < PIVOT_FLOOR))
        raise ConditioningFailure(
            f"Gram matrix numerically singular at monomial degree {bad} "
            f"(pivot {piv[bad]:.1e})",
            bad,
        )
    return L, scale


def degree_heuristic(chart: BergmanChart) -> int:
    """Suggested minimum degree ``2 m R sup(tau_zzbar)``."""
    z, _ = chart.nodes()
    return int(math.ceil(2 * chart.m * chart.radius * float(np.max(chart.tau_zzbar(z)))))


def bergman_kernel_log_diag(chart: BergmanChart, points) -> np.ndarray:
    """``log K_m(x, x)`` for each point, from the orthonormalized monomial basis."""
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    if np.any(np.abs(points) >= chart.radius):
        raise ValueError("evaluation points must lie inside the chart disk")
    need = degree_heuristic(chart)
    if chart.degree < need:
        warnings.warn(
            f"degree {chart.degree} below heuristic {need} for m={chart.m}",
            RuntimeWarning,
            stacklevel=2,
        )
    G, shift = gram_matrix(chart)
    L, scale = _factor(G)
    E = points[None, :] ** np.arange(chart.degree + 1)[:, None]
    # orthonormal basis values: L_s^{-1} S e(x)
    P = solve_triangular(L, scale[:, None] * E, lower=True)
    K = np.sum(np.abs(P) ** 2, axis=0)
    return np.log(K) - shift


def bergman_kernel_diag(chart: BergmanChart, points) -> np.ndarray:
    """``(1/m) log K_m(x, x)`` at each point."""
    return bergman_kernel_log_diag(chart, points) / chart.m


def radial_kernel_at_origin(m: int, radius: float = 1.0) -> float:
    """Closed form of ``K_m(0, 0)`` for ``tau = |z|^2`` on ``|z| < radius``."""
    a = m + 1
    return a / (math.pi * -math.expm1(-a * radius**2))


@dataclass(frozen=True)
class ConvergenceRow:
    m: int
    points: tuple
    values: tuple
    deviations: tuple

    @property
    def errors(self) -> tuple:
        return tuple(abs(d) for d in self.deviations)

    @property
    def sup_error(self) -> float:
        return max(self.errors)


def convergence_study(template: BergmanChart, m_list, points):
    """Sup over ``points`` of ``|(1/m) log K_m(x,x) - tau(x)|`` for each ``m``."""
    m_list = list(m_list)
    if any(b < a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be non-decreasing")
    points = tuple(complex(p) for p in points)
    rows = []
    for m in m_list:
        chart = template.with_m(m)
        vals = bergman_kernel_diag(chart, points)
        taus = chart.tau(np.array(points))
        rows.append(
            ConvergenceRow(
                m,
                points,
                tuple(float(v) for v in vals),
                tuple(float(v - t) for v, t in zip(vals, taus)),
            )
        )
    return rows


def fit_log_constant(rows) -> float:
    """Smallest ``C`` with ``(1/m) log K_m - tau <= C log(m) / m`` on the rows with ``m >= 2``."""
    ratios = [d * row.m / math.log(row.m) for row in rows if row.m >= 2 for d in row.deviations]
    return max(ratios, default=math.nan)
