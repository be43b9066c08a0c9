"""Relative form rho over the family and the geometric quantities built from it.

With the fiber solution ``psi`` at base point ``t`` the form is
``rho = beta + i ddbar psi``; its components are

    g_zz = exp(psi),  g_tz = beta_tz + psi_tzbar,  g_tt = beta_tt + psi_ttbar.

The ``t``-derivatives of ``psi`` come from differentiating the fiber equation
(two linear solves per base point), not from finite differences across fibers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import BetaEval, hermitian_eigmin
from .solver import FiberSolution, solve_linearized
from .torus import TorusGrid


@dataclass(frozen=True)
class FamilyDerivatives:
    psi_t: np.ndarray
    psi_ttbar: np.ndarray
    psi_tzbar: np.ndarray

    @property
    def psi_tbar(self) -> np.ndarray:
        return np.conj(self.psi_t)


@dataclass(frozen=True)
class RhoField:
    g_tt: np.ndarray
    g_tz: np.ndarray
    g_zz: np.ndarray

    @property
    def g_zt(self) -> np.ndarray:
        return np.conj(self.g_tz)

    def eigmin(self) -> np.ndarray:
        return hermitian_eigmin(self.g_tt, self.g_tz, self.g_zz)


@dataclass(frozen=True)
class RelativeCurvature:
    """Components of ``rho - beta``, the curvature of the induced metric on K_{X/Y}."""

    tt: np.ndarray
    tz: np.ndarray
    zz: np.ndarray
    min_eig_rho: float


@dataclass(frozen=True)
class GeometryReport:
    c: np.ndarray
    a: np.ndarray
    dbar_v_sq: np.ndarray
    beta_vv: np.ndarray
    identity_residual_sup: float
    identity_residual_l2: float
    min_c: float
    min_eig_rho: float


def compute_t_derivatives(
    sol: FiberSolution, beta: BetaEval, tol: float = 1e-12
) -> FamilyDerivatives:
    """Implicit differentiation of ``psi_zzbar + beta_zzbar = exp(psi)`` in ``t`` and ``tbar``."""
    grid = sol.grid
    psi = sol.psi
    psi_t = solve_linearized(psi, -beta.dt_zz, grid, tol=tol)
    rhs = np.exp(psi) * np.abs(psi_t) ** 2 - beta.dtdtbar_zz
    psi_ttbar = solve_linearized(psi, rhs, grid, tol=tol)
    return FamilyDerivatives(psi_t=psi_t, psi_ttbar=psi_ttbar, psi_tzbar=grid.dzbar(psi_t))


def assemble_rho(sol: FiberSolution, derivs: FamilyDerivatives, beta: BetaEval) -> RhoField:
    # exp(psi) rather than beta_zz + psi_zzbar: equal to solver tolerance, and strictly positive
    return RhoField(
        g_tt=beta.tt + derivs.psi_ttbar,
        g_tz=beta.tz + derivs.psi_tzbar,
        g_zz=np.exp(sol.psi),
    )


def geodesic_curvature(rho: RhoField) -> np.ndarray:
    """``c(rho) = g_tt - |g_tz|^2 / g_zz``."""
    return rho.g_tt - np.abs(rho.g_tz) ** 2 / rho.g_zz


def horizontal_lift(rho: RhoField, grid: TorusGrid):
    """Coefficient ``a`` of ``v = d/dt - a d/dz`` and the pointwise ``|dbar v|^2``.

    ``a = g_tz / g_zz``.  In one fiber dimension the metric factors of the
    (0,1)-form and of the vector cancel, leaving ``|d a/d zbar|^2``.
    """
    a = rho.g_tz / rho.g_zz
    return a, np.abs(grid.dzbar(a)) ** 2


def beta_along_lift(beta: BetaEval, a) -> np.ndarray:
    """``beta(v, vbar) = beta_tt - 2 Re(conj(a) beta_tz) + |a|^2 beta_zz``."""
    return beta.tt - 2 * np.real(np.conj(a) * beta.tz) + np.abs(a) ** 2 * beta.zz


def relative_canonical_curvature(rho: RhoField, beta: BetaEval) -> RelativeCurvature:
    return RelativeCurvature(
        tt=rho.g_tt - beta.tt,
        tz=rho.g_tz - beta.tz,
        zz=rho.g_zz - beta.zz,
        min_eig_rho=float(np.min(rho.eigmin())),
    )


def identity_residual(c, dbar_v_sq, beta_vv, psi, grid: TorusGrid) -> np.ndarray:
    """Pointwise ``box c + c - |dbar v|^2 - beta(v, vbar)`` with ``box = -exp(-psi) d_zzbar``."""
    return -np.exp(-psi) * grid.laplace(c) + c - dbar_v_sq - beta_vv


def l2_norm(f, grid: TorusGrid) -> float:
    return float(np.sqrt(grid.integrate(np.abs(f) ** 2)))


def build_report(sol: FiberSolution, beta: BetaEval, rho: RhoField) -> GeometryReport:
    grid = sol.grid
    c = geodesic_curvature(rho)
    a, dbar_v_sq = horizontal_lift(rho, grid)
    beta_vv = beta_along_lift(beta, a)
    res = identity_residual(c, dbar_v_sq, beta_vv, sol.psi, grid)
    return GeometryReport(
        c=c,
        a=a,
        dbar_v_sq=dbar_v_sq,
        beta_vv=beta_vv,
        identity_residual_sup=float(np.max(np.abs(res))),
        identity_residual_l2=l2_norm(res, grid),
        min_c=float(np.min(c)),
        min_eig_rho=float(np.min(rho.eigmin())),
    )
