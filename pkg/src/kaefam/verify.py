"""Numerical checks of the positivity statements on a configured family.

Per base point we check the elliptic identity satisfied by the geodesic
curvature, pointwise positivity of rho (optionally above a lower-bound form),
the lower bound of ``inf c`` by the fiber integral of ``|dbar v|^2 + beta(v, vbar)``,
and the maximum-principle consequence at the grid minimum of ``c``.  The
epsilon sweep reruns everything with ``beta`` scaled by ``eps``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import KaefamError
from .expr import hermitian_eigmin
from .family import BasePointResult, Family, analyze_base_point
from .geometry import GeometryReport, RhoField, identity_residual, l2_norm

DEGENERATE_DENOMINATOR = 1e-14
MIN_SWEEP_VOLUME = 1e-8


def check_identity_34(report: GeometryReport, sol, rho: RhoField):
    """Sup and L2 norms of ``-exp(-psi) c_zzbar + c - |dbar v|^2 - beta(v, vbar)``."""
    grid = sol.grid
    c = report.c
    res = identity_residual(c, report.dbar_v_sq, report.beta_vv, sol.psi, grid)
    return float(np.max(np.abs(res))), l2_norm(res, grid)


@dataclass(frozen=True)
class PositivityReport:
    min_eig_rho: float
    min_eig_above_bound: float | None = None


def check_positivity(rho: RhoField, beta=None, lower_bound=None) -> PositivityReport:
    """Minimum eigenvalue of rho; with ``lower_bound=(tt, tz, zz)`` also of ``rho - beta - bound``."""
    min_rho = float(np.min(rho.eigmin()))
    if lower_bound is None:
        return PositivityReport(min_rho)
    if beta is None:
        raise ValueError("beta is required together with a lower-bound form")
    b_tt, b_tz, b_zz = lower_bound
    gap = hermitian_eigmin(
        rho.g_tt - beta.tt - b_tt, rho.g_tz - beta.tz - b_tz, rho.g_zz - beta.zz - b_zz
    )
    return PositivityReport(min_rho, float(np.min(gap)))


@dataclass(frozen=True)
class Bound35:
    ratio: float
    degenerate: bool
    argmin_gap: float
    denominator: float


def check_bound_35(report: GeometryReport, sol, rho: RhoField) -> Bound35:
    """Realized constant ``inf c / integral((|dbar v|^2 + beta(v,vbar)) dV_rho)`` and argmin gap.

    At the grid minimum ``z*`` of ``c`` the Laplacian term of the identity is
    non-positive, forcing ``c(z*) >= |dbar v|^2(z*) + beta(v,vbar)(z*)``.
    """
    grid = sol.grid
    integrand = (report.dbar_v_sq + report.beta_vv) * rho.g_zz
    denom = float(grid.integrate(integrand).real)
    inf_c = float(np.min(report.c))
    degenerate = abs(denom) < DEGENERATE_DENOMINATOR
    ratio = math.nan if degenerate else inf_c / denom
    k = np.unravel_index(np.argmin(report.c), report.c.shape)
    gap = float(report.c[k] - report.dbar_v_sq[k] - report.beta_vv[k])
    return Bound35(ratio, degenerate, gap, denom)


@dataclass(frozen=True)
class BasePointRow:
    t: complex
    min_c: float
    min_eig_rho: float
    residual_sup: float
    residual_l2: float
    ratio_35: float
    degenerate_35: bool
    argmin_gap: float
    newton_iters: int
    fiber_volume: float
    beta_volume: float
    error: str | None = None


@dataclass
class VerificationReport:
    rows: list = field(default_factory=list)

    def _ok_rows(self):
        return [r for r in self.rows if r.error is None]

    @property
    def identity_residual_sup(self) -> float:
        return max((r.residual_sup for r in self._ok_rows()), default=math.nan)

    @property
    def identity_residual_l2(self) -> float:
        return max((r.residual_l2 for r in self._ok_rows()), default=math.nan)

    @property
    def min_c(self) -> float:
        return min((r.min_c for r in self._ok_rows()), default=math.nan)

    @property
    def min_eig_rho(self) -> float:
        return min((r.min_eig_rho for r in self._ok_rows()), default=math.nan)

    @property
    def argmin_bound_gap(self) -> float:
        return min((r.argmin_gap for r in self._ok_rows()), default=math.nan)

    @property
    def ratio_35(self) -> float:
        vals = [r.ratio_35 for r in self._ok_rows() if not r.degenerate_35]
        return min(vals, default=math.nan)

    @property
    def failures(self):
        return [r for r in self.rows if r.error is not None]


def row_from_result(res: BasePointResult) -> BasePointRow:
    sol, rho, rep = res.solution, res.rho, res.report
    sup, l2 = check_identity_34(rep, sol, rho)
    b = check_bound_35(rep, sol, rho)
    return BasePointRow(
        t=res.t,
        min_c=rep.min_c,
        min_eig_rho=check_positivity(rho).min_eig_rho,
        residual_sup=sup,
        residual_l2=l2,
        ratio_35=b.ratio,
        degenerate_35=b.degenerate,
        argmin_gap=b.argmin_gap,
        newton_iters=sol.newton_iters,
        fiber_volume=sol.fiber_volume,
        beta_volume=float(sol.grid.integrate(res.beta.zz)),
    )


def _failed_row(t, exc) -> BasePointRow:
    nan = math.nan
    return BasePointRow(t, nan, nan, nan, nan, nan, False, nan, 0, nan, nan, error=str(exc))


def verify_family(
    family: Family, base_points, tol: float = 1e-12, max_iters: int = 50, workers: int = 1
) -> VerificationReport:
    """Run the full pipeline at every base point; failures become error rows."""
    points = [complex(t) for t in base_points]
    family.require_semipositive(points)

    def work(t):
        try:
            return row_from_result(analyze_base_point(family, t, tol=tol, max_iters=max_iters))
        except KaefamError as exc:
            return _failed_row(t, exc)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(work, points))
    else:
        rows = [work(t) for t in points]
    return VerificationReport(rows)


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    t: complex
    min_c: float
    min_eig_rho: float
    psi: np.ndarray | None
    error: str | None = None


def epsilon_sweep(
    family: Family,
    epsilons=(1.0, 0.5, 0.25, 0.1, 0.05),
    base_points=(0j,),
    tol: float = 1e-12,
    max_iters: int = 50,
    workers: int = 1,
):
    """Solve the pipeline with ``beta`` replaced by ``eps * beta``.

    ``psi_eps`` certifies ``i ddbar psi_eps >= -eps beta``, which is the
    positivity of ``rho_eps``.  Rows are sorted by decreasing ``eps`` then by
    base point order; a failing item yields a row with ``error`` set.
    """
    items = []
    for eps in sorted(epsilons, reverse=True):
        if not eps > 0:
            raise ValueError("epsilon values must be positive")
        scaled = family.scaled(eps)
        for t in base_points:
            items.append((eps, scaled, complex(t)))

    def work(item):
        eps, fam, t = item
        try:
            volume = float(fam.grid.integrate(fam.beta(t).zz))
            if volume < MIN_SWEEP_VOLUME:
                return SweepRow(
                    eps, t, math.nan, math.nan, None,
                    error=f"epsilon {eps:g} rejected: fiber volume {volume:.2e} "
                    f"below {MIN_SWEEP_VOLUME:.0e}, Newton conditioning degrades",
                )
            res = analyze_base_point(fam, t, tol=tol, max_iters=max_iters)
        except KaefamError as exc:
            return SweepRow(eps, t, math.nan, math.nan, None, error=str(exc))
        return SweepRow(eps, t, res.report.min_c, res.report.min_eig_rho, res.solution.psi)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(work, items))
    return [work(item) for item in items]
