"""Fiberwise twisted Kähler-Einstein equation on a torus fiber.

On a one-dimensional torus fiber the equation reduces to the scalar problem

    psi_zzbar + beta_zzbar = exp(psi)

for a real periodic ``psi``.  Integrating over the fiber kills ``psi_zzbar``,
so a solution exists only when ``beta_zzbar`` has positive mean, and then
``integral(exp(psi)) == integral(beta_zzbar)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, KahlerClassViolation
from .torus import TorusGrid, dealias as _dealias

log = logging.getLogger(__name__)

DEGENERATE_MEAN = 1e-8


@dataclass(frozen=True)
class FiberSolution:
    psi: np.ndarray
    residual_sup: float
    newton_iters: int
    fiber_volume: float
    grid: TorusGrid
    residual_history: list = field(default_factory=list)
    degenerate: bool = False
    psi_hat: np.ndarray | None = None

    @property
    def psi_zzbar(self) -> np.ndarray:
        """``d_zzbar psi`` from the Fourier coefficients, free of sample rounding."""
        if self.psi_hat is None:
            return self.grid.laplace(self.psi)
        return np.fft.ifft2(self.grid.symbol("zzbar") * self.psi_hat).real


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def solve_linearized(psi, rhs, grid: TorusGrid, tol: float = 1e-12, max_iters: int = 500):
    """Solve ``u_zzbar - exp(psi) u = rhs`` by preconditioned conjugate gradients.

    The operator ``A = -d_zzbar + exp(psi)`` is symmetric positive definite on
    grid functions.  The preconditioner inverts the constant-coefficient
    operator ``-d_zzbar + mean(exp(psi))`` in Fourier space.  ``rhs`` may be
    complex; the result is real when ``rhs`` is.
    """
    psi = np.asarray(psi, dtype=float)
    rhs = np.asarray(rhs)
    if rhs.shape != grid.shape:
        raise ValueError("rhs shape does not match grid")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs has non-finite samples")
    real = np.isrealobj(rhs)
    mass = np.exp(psi)
    lap = grid.symbol("zzbar")
    precond = 1.0 / (-lap + np.mean(mass))

    # iterate on unitary Fourier coefficients so the Laplacian never sees
    # sample rounding; A stays Hermitian positive definite
    def fft(f):
        return np.fft.fft2(f, norm="ortho")

    def ifft(f):
        return np.fft.ifft2(f, norm="ortho")

    def apply_A(u_hat):
        return -lap * u_hat + fft(mass * ifft(u_hat))

    def phys_sup(r_hat):
        return _sup(ifft(r_hat))

    b = fft(-rhs)
    u = precond * b
    r = b - apply_A(u)
    history = [phys_sup(r)]
    restarts = 0
    while history[-1] > tol:
        z = precond * r
        p = z.copy()
        rz = np.vdot(r, z).real
        for _ in range(max_iters):
            Ap = apply_A(p)
            alpha = rz / np.vdot(p, Ap).real
            u = u + alpha * p
            r = r - alpha * Ap
            if phys_sup(r) <= 0.5 * tol:
                break
            z = precond * r
            rz_new = np.vdot(r, z).real
            p = z + (rz_new / rz) * p
            rz = rz_new
        # recursive residual drifts; restart from the true one
        r = b - apply_A(u)
        res = phys_sup(r)
        if res > tol and (res >= 0.5 * history[-1] or restarts >= 5):
            history.append(res)
            raise ConvergenceFailure(
                f"linear solve stagnated at residual {res:.3e} (tol {tol:.1e})", history
            )
        history.append(res)
        restarts += 1
    u = ifft(u)
    return u.real if real else u


def fiber_residual(sol: FiberSolution, beta_zz) -> np.ndarray:
    """``psi_zzbar + beta_zzbar - exp(psi)`` for a computed solution."""
    return sol.psi_zzbar + beta_zz - np.exp(sol.psi)


def solve_fiber_ke(
    beta_zz,
    grid: TorusGrid,
    init=None,
    tol: float = 1e-12,
    max_iters: int = 50,
    max_halvings: int = 30,
    dealias: bool = False,
) -> FiberSolution:
    """Damped Newton iteration for ``psi_zzbar + beta_zzbar = exp(psi)``.

    Parameters
    ----------
    beta_zz : ndarray
        Real fiber coefficient of the twist form, sampled on ``grid``.
    init : ndarray, optional
        Starting guess; defaults to the constant ``log(mean(beta_zz))``.
    tol : float
        Target sup-norm of the residual.
    dealias : bool
        Apply the 2/3 rule to the exponential nonlinearity.

    Raises
    ------
    KahlerClassViolation
        If ``beta_zz`` has non-positive mean.
    ConvergenceFailure
        If Newton fails to reach ``tol`` within ``max_iters`` steps or the
        Armijo line search cannot decrease the residual.
    """
    beta_zz = np.asarray(beta_zz)
    if np.iscomplexobj(beta_zz):
        if _sup(beta_zz.imag) > 1e-12:
            raise ValueError("beta_zzbar must be real")
        beta_zz = beta_zz.real
    if beta_zz.shape != grid.shape or not np.all(np.isfinite(beta_zz)):
        raise ValueError("beta_zzbar must be a finite field on the grid")
    mean = float(np.mean(beta_zz))
    if not mean > 0:
        raise KahlerClassViolation(
            f"fiber class is not Kähler: mean of beta_zzbar is {mean:.3e}"
        )
    degenerate = mean < DEGENERATE_MEAN
    if degenerate:
        log.warning("beta_zzbar has tiny mean %.3e; solution is near-degenerate", mean)

    # The iterate lives in Fourier space: applying the Laplacian to physical
    # samples would amplify their rounding by up to ~(pi N)^2.
    lap = grid.symbol("zzbar")
    if init is None:
        psi_hat = np.zeros(grid.shape, dtype=complex)
        psi_hat[0, 0] = math.log(mean) * grid.N**2
    else:
        psi_hat = np.fft.fft2(np.asarray(init, dtype=float))

    def exp_term(p):
        e = np.exp(p)
        return _dealias(e, grid) if dealias else e

    def evaluate(p_hat):
        p = np.fft.ifft2(p_hat).real
        F = np.fft.ifft2(lap * p_hat).real + beta_zz - exp_term(p)
        return p, F

    psi, F = evaluate(psi_hat)
    r = _sup(F)
    history = [r]
    iters = 0
    while r > tol:
        if iters >= max_iters:
            raise ConvergenceFailure(
                f"Newton did not converge in {max_iters} steps (residual {r:.3e})", history
            )
        # inexact Newton: forcing term min(0.01 r, r^2) keeps the tail quadratic
        lin_tol = max(min(0.01 * r, r * r), 0.1 * tol)
        step_hat = np.fft.fft2(solve_linearized(psi, -F, grid, tol=lin_tol))
        alpha = 1.0
        for _ in range(max_halvings + 1):
            trial_hat = psi_hat + alpha * step_hat
            trial, F_trial = evaluate(trial_hat)
            r_trial = _sup(F_trial)
            if np.isfinite(r_trial) and r_trial <= (1 - 1e-4 * alpha) * r:
                break
            alpha *= 0.5
        else:
            history.append(r_trial)
            raise ConvergenceFailure(
                f"line search failed at residual {r:.3e} after {max_halvings} halvings",
                history,
            )
        psi_hat, psi, F, r = trial_hat, trial, F_trial, r_trial
        history.append(r)
        iters += 1

    return FiberSolution(
        psi=psi,
        residual_sup=r,
        newton_iters=iters,
        fiber_volume=float(grid.integrate(np.exp(psi))),
        grid=grid,
        residual_history=history,
        degenerate=degenerate,
        psi_hat=psi_hat,
    )
