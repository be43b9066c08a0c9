"""A torus fibration over a disk with a twist form, and the per-base-point pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SemiPositivityViolation
from .expr import BackgroundForm, BetaEval, TwistForm, check_semipositive, parse_potential
from .geometry import (
    FamilyDerivatives,
    GeometryReport,
    RhoField,
    assemble_rho,
    build_report,
    compute_t_derivatives,
)
from .solver import FiberSolution, solve_fiber_ke
from .torus import TorusGrid


@dataclass(frozen=True)
class Family:
    """Product family ``D x T`` with twist ``beta = H + i ddbar Phi``."""

    twist: TwistForm
    grid: TorusGrid
    disk_radius: float = 1.0
    psd_tol: float = 1e-10
    allow_non_psd: bool = False
    _psd_checked: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @classmethod
    def from_text(
        cls,
        potential: str,
        H: BackgroundForm | None = None,
        N: int = 64,
        tau: complex = 1j,
        **kwargs,
    ) -> "Family":
        grid = TorusGrid(N, tau)
        twist = TwistForm(parse_potential(potential), H or BackgroundForm(), grid.tau)
        return cls(twist, grid, **kwargs)

    def with_grid(self, N: int) -> "Family":
        grid = TorusGrid(N, self.grid.tau)
        return Family(self.twist, grid, self.disk_radius, self.psd_tol, self.allow_non_psd)

    def scaled(self, eps: float) -> "Family":
        return Family(
            self.twist.scaled(eps), self.grid, self.disk_radius, self.psd_tol, self.allow_non_psd
        )

    def beta(self, t: complex) -> BetaEval:
        if abs(t) > self.disk_radius:
            raise ValueError(f"base point {t} lies outside the disk of radius {self.disk_radius}")
        return self.twist.evaluate(t, self.grid)

    def require_semipositive(self, base_points) -> None:
        """Raise unless beta passes the sampled PSD check (skipped with ``allow_non_psd``)."""
        if self.allow_non_psd:
            return
        key = tuple(complex(t) for t in base_points)
        if key not in self._psd_checked:
            self._psd_checked[key] = check_semipositive(
                self.twist, self.twist.H, key, self.grid, self.psd_tol
            )
        report = self._psd_checked[key]
        if not report.ok:
            raise SemiPositivityViolation(
                f"twist form has eigenvalue {report.min_eigenvalue:.3e} at t={report.argmin_t}"
            )


@dataclass(frozen=True)
class BasePointResult:
    t: complex
    beta: BetaEval
    solution: FiberSolution
    derivatives: FamilyDerivatives
    rho: RhoField
    report: GeometryReport


def analyze_base_point(
    family: Family, t: complex, tol: float = 1e-12, max_iters: int = 50, init=None
) -> BasePointResult:
    """Solve the fiber at ``t``, differentiate in ``t``, and assemble all geometry."""
    t = complex(t)
    family.require_semipositive([t])
    beta = family.beta(t)
    sol = solve_fiber_ke(beta.zz, family.grid, init=init, tol=tol, max_iters=max_iters)
    derivs = compute_t_derivatives(sol, beta, tol=tol)
    rho = assemble_rho(sol, derivs, beta)
    return BasePointResult(t, beta, sol, derivs, rho, build_report(sol, beta, rho))
