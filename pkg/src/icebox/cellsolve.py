"""Per-cell implicit update of the volume increment and phase fraction.

Each time step first advances the mechanical pair ``(U, chi)`` cell by
cell with the temperature lagged, then the temperature step
(:mod:`icebox.stepper`) consumes the resulting heat source.  Because
the volume equation is affine in ``U`` for fixed ``chi``, ``U`` is
eliminated exactly and the phase update reduces to a scalar monotone
complementarity problem on ``[0, 1]``, solved by a safeguarded Newton
iteration.  The mean volume increment couples all cells through the
container pressure; the outer loop solves that single scalar fixed
point with a guaranteed bracket.

Conventions: ``chi = 1`` is liquid, ``chi = 0`` is solid; ``S = U - 1
+ chi`` is the elastic strain-like combination entering the stored
energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .materials import MaterialModel, TruncationFamily

__all__ = [
    "SolverError",
    "StepCells",
    "CellSolution",
    "prepare_cells",
    "coupling_terms",
    "solve_cells",
    "increment_map",
    "cell_residuals",
    "heat_source",
    "solve_volume_coupling",
]

CHI_FTOL = 1e-12          # phase residual tolerance
MEAN_RTOL = 1e-11         # volume-mean residual tolerance, per unit volume


class SolverError(RuntimeError):
    """A nonlinear solve failed or was ill-posed at the current step size."""


@dataclass(frozen=True)
class StepCells:
    """Per-step frozen data for the cell updates.

    All coefficient arrays are evaluated at the previous state: the
    scheme lags the temperature in the mechanical equations and the
    phase fraction in the elastic modulus, which is what makes the
    cell update a scalar problem.
    """

    fam: TruncationFamily
    tau: float
    theta_prev: np.ndarray
    chi_prev: np.ndarray
    u_prev: np.ndarray
    q_prev: np.ndarray      # truncated positive part of theta_prev
    gap_prev: np.ndarray    # f1r(theta_prev) - f1(theta_c)
    lam_prev: np.ndarray    # coupling modulus at chi_prev
    gamma_prev: np.ndarray  # relaxation coefficient at theta_prev
    pull: np.ndarray        # g (zeta_Gamma - x3) + 1, per cell

    @property
    def model(self) -> MaterialModel:
        return self.fam.model


@dataclass(frozen=True)
class CellSolution:
    u: np.ndarray
    chi: np.ndarray
    active: np.ndarray      # -1 solid clamp, 0 interior, +1 liquid clamp
    iterations: int


def prepare_cells(fam: TruncationFamily, grid, theta_prev, chi_prev,
                  u_prev, tau) -> StepCells:
    """Cache the lagged coefficient arrays for one time step."""
    if not (np.isfinite(tau) and tau > 0.0):
        raise SolverError(f"time step must be positive, got {tau}")
    model = fam.model
    cst = model.constants
    theta_prev = np.asarray(theta_prev, dtype=float)
    chi_prev = np.asarray(chi_prev, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    pull = cst.g * (cst.zeta_Gamma - grid.x3) + 1.0
    return StepCells(
        fam=fam,
        tau=float(tau),
        theta_prev=theta_prev,
        chi_prev=chi_prev,
        u_prev=u_prev,
        q_prev=fam.qr(theta_prev),
        gap_prev=fam.f1r(theta_prev) - fam.f1_theta_c,
        lam_prev=np.asarray(model.lam(chi_prev), dtype=float),
        gamma_prev=np.asarray(model.gamma(theta_prev), dtype=float),
        pull=pull,
    )


def _u_affine(cells: StepCells, mean_plus_outer):
    """Coefficients of the exact elimination ``U(chi) = (base - lam_prev chi) / denom``."""
    cst = cells.model.constants
    base = (cells.u_prev / cells.tau + cells.q_prev + cells.lam_prev
            - cst.K_Gamma * mean_plus_outer - cells.pull)
    denom = 1.0 / cells.tau + cells.lam_prev
    return base, denom


def coupling_terms(cells: StepCells, u_new, chi_new, mean_plus_outer):
    """Force terms of the three balance equations at the new state.

    Returns ``(A, B, C)``: ``A`` drives the volume rate, ``B`` the
    thermal part of the phase force, ``C`` its mechanical part.  The
    lag pattern matches the update equations, so these are also the
    exact work coefficients of the discrete energy ledger.
    """
    model, cst = cells.model, cells.model.constants
    strain = u_new - 1.0 + chi_new
    A = (cells.lam_prev * strain + cst.K_Gamma * mean_plus_outer
         + cells.pull)
    B = (np.asarray(model.c_prime(chi_new), dtype=float) * cells.gap_prev
         - 2.0 * cells.q_prev)
    C = (0.5 * np.asarray(model.lam_prime(chi_new), dtype=float) * strain ** 2
         + cells.lam_prev * strain + 2.0)
    return A, B, C


def _phase_force(cells: StepCells, chi, base, denom):
    """Residual of the phase equation after eliminating U (monotone in chi)."""
    model = cells.model
    u = (base - cells.lam_prev * chi) / denom
    strain = u - 1.0 + chi
    return (cells.gamma_prev * (chi - cells.chi_prev) / cells.tau
            + np.asarray(model.c_prime(chi), dtype=float) * cells.gap_prev
            - 2.0 * cells.q_prev
            + 0.5 * np.asarray(model.lam_prime(chi), dtype=float) * strain ** 2
            + cells.lam_prev * strain + 2.0)


def _phase_force_slope(cells: StepCells, chi, base, denom):
    model = cells.model
    u = (base - cells.lam_prev * chi) / denom
    strain = u - 1.0 + chi
    dstrain = 1.0 / (1.0 + cells.tau * cells.lam_prev)
    return (cells.gamma_prev / cells.tau
            + np.asarray(model.c_second(chi), dtype=float) * cells.gap_prev
            + 0.5 * np.asarray(model.lam_second(chi), dtype=float) * strain ** 2
            + np.asarray(model.lam_prime(chi), dtype=float) * strain * dstrain
            + cells.lam_prev * dstrain)


def solve_cells(cells: StepCells, mean_plus_outer) -> CellSolution:
    """Advance ``(U, chi)`` in every cell for a given container load.

    The phase force is non-decreasing in ``chi`` for admissible step
    sizes; clamped states are detected from its sign at the interval
    ends and interior roots are found by Newton steps safeguarded by
    the shrinking sign bracket.
    """
    base, denom = _u_affine(cells, mean_plus_outer)
    n = base.size
    f0 = _phase_force(cells, np.zeros(n), base, denom)
    f1 = _phase_force(cells, np.ones(n), base, denom)

    bad = (f0 > 0.0) & (f1 < 0.0)
    if np.any(bad):
        raise SolverError(
            f"phase force is decreasing across [0,1] in {int(bad.sum())} "
            "cells; the time step is too large for this material "
            "(see the advertised step-size ceiling)")

    chi = np.zeros(n)
    active = np.full(n, -1, dtype=np.int8)
    upper = (f0 < 0.0) & (f1 <= 0.0)
    chi[upper] = 1.0
    active[upper] = 1
    interior = (f0 < 0.0) & (f1 > 0.0)
    iters = 0

    if np.any(interior):
        idx = np.nonzero(interior)[0]
        sub = StepCells(cells.fam, cells.tau, cells.theta_prev[idx],
                        cells.chi_prev[idx], cells.u_prev[idx],
                        cells.q_prev[idx], cells.gap_prev[idx],
                        cells.lam_prev[idx], cells.gamma_prev[idx],
                        cells.pull[idx])
        b_, d_ = base[idx], denom[idx]
        lo = np.zeros(idx.size)
        hi = np.ones(idx.size)
        flo, fhi = f0[idx], f1[idx]
        # secant start is nearly exact in the rate-dominated regime
        x = np.clip(-flo / (fhi - flo), 0.0, 1.0)
        for iters in range(1, 101):
            fx = _phase_force(sub, x, b_, d_)
            pos = fx > 0.0
            hi = np.where(pos, x, hi)
            lo = np.where(pos, lo, x)
            if np.all(np.abs(fx) <= CHI_FTOL) or np.all(hi - lo <= 4e-16):
                break
            slope = _phase_force_slope(sub, x, b_, d_)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - fx / slope
            mid = 0.5 * (lo + hi)
            xn = np.where((xn > lo) & (xn < hi) & np.isfinite(xn), xn, mid)
            x = xn
        fx = _phase_force(sub, x, b_, d_)
        if np.any(np.abs(fx) > 1e-9):
            raise SolverError("phase update did not converge; reduce the "
                              "time step")
        chi[idx] = x
        active[idx] = 0

    u = (base - cells.lam_prev * chi) / denom
    return CellSolution(u=u, chi=chi, active=active, iterations=iters)


def increment_map(cells: StepCells, u, chi):
    """State-dependent part of the cell update as a map on ``(U, chi)``.

    The update equations read ``increment_map(U, chi) + constants +
    constraint reaction = 0``; well-posedness of the cell solve rests
    on this map being strongly monotone for admissible step sizes.
    Returns the pair of components.
    """
    model = cells.model
    u = np.asarray(u, dtype=float)
    chi = np.asarray(chi, dtype=float)
    strain = u - 1.0 + chi
    fu = u / cells.tau + cells.lam_prev * strain
    fchi = (cells.gamma_prev * chi / cells.tau
            + np.asarray(model.c_prime(chi), dtype=float) * cells.gap_prev
            + 0.5 * np.asarray(model.lam_prime(chi), dtype=float) * strain ** 2
            + cells.lam_prev * strain)
    return fu, fchi


def cell_residuals(cells: StepCells, sol: CellSolution, mean_plus_outer):
    """Defects of the two cell equations at a solution.

    Returns ``(volume_residual, phase_multiplier)`` where the
    multiplier is the constraint reaction absorbed by the indicator
    term.  A valid solution has zero volume residual, and a multiplier
    that is nonpositive on solid clamps, nonnegative on liquid clamps
    and zero on interior cells.
    """
    A, B, C = coupling_terms(cells, sol.u, sol.chi, mean_plus_outer)
    r_u = (sol.u - cells.u_prev) / cells.tau - cells.q_prev + A
    chidot = (sol.chi - cells.chi_prev) / cells.tau
    xi = -(cells.gamma_prev * chidot + B + C)
    return r_u, xi


def heat_source(cells: StepCells, sol: CellSolution, mean_plus_outer):
    """Per-cell heat released by the mechanical update.

    This is the exact source the temperature equation must carry for
    the discrete energy ledger to close: latent heat of the phase
    change plus the work of the volume and phase rates against their
    driving forces.
    """
    A, _, C = coupling_terms(cells, sol.u, sol.chi, mean_plus_outer)
    udot = (sol.u - cells.u_prev) / cells.tau
    chidot = (sol.chi - cells.chi_prev) / cells.tau
    e1r_prev = cells.fam.e1r(cells.theta_prev)
    cp = np.asarray(cells.model.c_prime(sol.chi), dtype=float)
    return (-cp * chidot * (e1r_prev - cells.fam.f1_theta_c)
            - udot * A - chidot * C)


def solve_volume_coupling(cells: StepCells, volumes, p_outer,
                          mean_init=None, max_iter=200):
    """Advance all cells and the container load simultaneously.

    Solves ``integral(U[m]) = m`` where each ``U`` depends on the mean
    ``m`` through the container pressure.  The defect ``psi(m) =
    integral(U[m]) - m`` has slope at most ``-1``, so one evaluation
    yields a sign bracket of width ``|psi|`` and a regula-falsi
    iteration converges unconditionally.  Returns ``(solution, m)``
    where ``m`` is the mean actually loaded into the cells; it matches
    the volume integral of the returned field to the stop tolerance.
    """
    volumes = np.asarray(volumes, dtype=float)
    k_gamma = cells.model.constants.K_Gamma
    p_outer = float(p_outer)

    def defect(m):
        sol = solve_cells(cells, m + p_outer)
        return sol, float(sol.u @ volumes) - m

    if k_gamma == 0.0:
        # the load does not feed back; the mean is whatever comes out
        sol = solve_cells(cells, p_outer)
        return sol, float(sol.u @ volumes)

    tol = MEAN_RTOL * max(1.0, float(volumes.sum()))
    m = float(cells.u_prev @ volumes) if mean_init is None else float(mean_init)
    sol, psi = defect(m)
    if abs(psi) <= tol:
        return sol, m

    if psi > 0.0:
        a, fa = m, psi
        b = m + psi
        sol, fb = defect(b)
        if abs(fb) <= tol:
            return sol, b
    else:
        b, fb = m, psi
        a = m + psi
        sol, fa = defect(a)
        if abs(fa) <= tol:
            return sol, a
    if not (fa > 0.0 > fb):
        raise SolverError("container load bracket lost; the volume "
                          "coupling is not contracting")

    side = 0
    for _ in range(max_iter):
        x = a - fa * (b - a) / (fb - fa)
        if not (a < x < b):
            x = 0.5 * (a + b)
        sol, fx = defect(x)
        if abs(fx) <= tol:
            return sol, x
        if fx > 0.0:
            a, fa = x, fx
            if side == 1:
                fb *= 0.5  # Illinois trick against endpoint stagnation
            side = 1
        else:
            b, fb = x, fx
            if side == -1:
                fa *= 0.5
            side = -1
    raise SolverError("container load iteration did not converge")
