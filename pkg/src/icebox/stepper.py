"""Time integration of the coupled freeze-thaw system.

Each step advances the mechanical pair cell by cell with the
temperature lagged (:mod:`icebox.cellsolve`), then solves the implicit
temperature equation carrying the exact mechanical heat source.  Every
discrete inequality the scheme is built to satisfy is checked at run
time: complementarity of the phase update, the cumulative energy
ledger, the pointwise temperature floor, and the sign of the entropy
production.  A failed check raises :class:`InvariantViolation` rather
than silently producing a defective trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .cellsolve import (SolverError, cell_residuals, heat_source,
                        prepare_cells, solve_cells, solve_volume_coupling)
from .diagnostics import (EnergyTracker, EntropyRow, entropy_aggregate,
                          entropy_step, lower_bound_sequence)
from .grid import (Grid, as_field, boundary_exchange, integrate_field,
                   pressure_recovery, stiffness_matrix, stiffness_tridiag)
from .materials import TruncationFamily

__all__ = [
    "InvariantViolation",
    "compute_cR",
    "tau_ceiling",
    "ThetaSystem",
    "RunChecks",
    "RunSpec",
    "StepOutcome",
    "step",
    "run",
]


class InvariantViolation(RuntimeError):
    """A verified discrete inequality failed during time stepping."""

    def __init__(self, step_index, kind, message):
        super().__init__(f"step {step_index}: {kind}: {message}")
        self.step = int(step_index)
        self.kind = str(kind)


# ---------------------------------------------------------------------------
# a priori constants


def compute_cR(fam: TruncationFamily, samples=4096) -> float:
    """Stabilization weight dominating the mechanical heat sources.

    The quadratic temperature term with this weight absorbs both the
    volume-rate work and the latent term of the phase update, which is
    what makes the temperature floor argument close.  The supremum

        2 sup [Q(t)^2 / 4
               + (c' (e1r(t) - f1r(t)) + 2 Q(t))^2 / (4 gamma_low)] / t^2

    is taken over a logarithmic grid up to a thousand times the
    truncation cutoff; the leading factor 2 is a safety margin.  The
    grid value is stable: doubling ``samples`` moves it by far less
    than a percent because the supremum sits on the affine tail.
    """
    b = fam.model.bounds
    tg = np.geomspace(1e-6, 1e3 * fam.B, int(samples))
    q = fam.qr(tg)
    gap = fam.e1r(tg) - fam.f1r(tg)
    val = (q ** 2 / 4.0
           + (b.cprime_high * gap + 2.0 * q) ** 2 / (4.0 * b.gamma_low))
    return 2.0 * float((val / tg ** 2).max())


def tau_ceiling(fam: TruncationFamily, strain_scale=None) -> float:
    """Advisory step ceiling keeping the per-cell phase force monotone.

    Uses a worst-case strain envelope; the actual admissibility of a
    step is still verified cell by cell during the solve, so this is a
    planning number, not a hard gate.
    """
    model = fam.model
    z = np.linspace(0.0, 1.0, 201)
    c2 = float(np.abs(np.asarray(model.c_second(z), dtype=float)).max())
    l1 = float(np.abs(np.asarray(model.lam_prime(z), dtype=float)).max())
    l2 = float(np.abs(np.asarray(model.lam_second(z), dtype=float)).max())
    lh = float(np.asarray(model.lam(z), dtype=float).max())
    s_env = 2.0 * (1.0 + fam.B) if strain_scale is None else float(strain_scale)
    lip = (c2 * (abs(fam.f1B) + abs(fam.f1_theta_c))
           + 0.5 * l2 * s_env ** 2 + l1 * s_env + lh)
    return model.bounds.gamma_low / (2.0 * lip)


# ---------------------------------------------------------------------------
# implicit temperature update


class ThetaSystem:
    """Implicit temperature equation of one step.

    Exposes the residual, the lumped Jacobian, and a convex merit
    potential whose gradient is the residual, so the damped Newton
    iteration in :meth:`solve` is a descent method with guaranteed
    global convergence while the Jacobian stays positive definite.
    """

    def __init__(self, fam, grid: Grid, tau, theta_prev, chi_prev, chi_new,
                 source, theta_gamma, c_R):
        model = fam.model
        self.fam = fam
        self.grid = grid
        self.tau = float(tau)
        self.c_R = float(c_R)
        self.theta_prev = np.asarray(theta_prev, dtype=float)
        self.c_new = np.asarray(model.c(chi_new), dtype=float)
        self.source = np.asarray(source, dtype=float)
        self.e1_prev = fam.e1r(self.theta_prev)
        self.q2_prev = self.theta_prev * np.maximum(self.theta_prev, 0.0)

        kap = np.asarray(model.kappa(np.asarray(chi_prev, dtype=float)),
                         dtype=float)
        if np.any(kap <= 0.0):
            raise SolverError("conductivity must stay positive")
        self._kf = (0.5 * (kap[grid.faces_left] + kap[grid.faces_right])
                    * grid.face_trans)
        if grid.dim == 1:
            lower, diag, upper = stiffness_tridiag(grid, kap)
            self._band = (upper, diag)
            self._mat = None
        else:
            self._band = None
            self._mat = stiffness_matrix(grid, kap)

        tg = np.asarray(theta_gamma, dtype=float)
        if tg.ndim == 0:
            tg = np.full(grid.n_boundary, float(tg))
        if tg.shape != (grid.n_boundary,):
            raise ValueError("boundary temperature has wrong shape")
        self.tg = tg
        self._w = grid.boundary_h * grid.boundary_measure
        n = grid.n_cells
        self._bw = np.bincount(grid.boundary_cells, weights=self._w,
                               minlength=n)
        self._bsrc = np.bincount(grid.boundary_cells, weights=self._w * tg,
                                 minlength=n)
        self.rhs_norm = float(np.abs(self.residual(np.zeros(n))).max())

    def _apply_stiffness(self, th):
        g = self.grid
        flux = self._kf * (th[g.faces_left] - th[g.faces_right])
        out = np.bincount(g.faces_left, weights=flux, minlength=g.n_cells)
        out -= np.bincount(g.faces_right, weights=flux, minlength=g.n_cells)
        return out

    def residual(self, theta) -> np.ndarray:
        """Volume-weighted defect of the temperature equation."""
        th = np.asarray(theta, dtype=float)
        v = self.grid.volumes
        acc = v * (self.c_new * (self.fam.e1r(th) - self.e1_prev) / self.tau
                   + self.c_R * (th * np.maximum(th, 0.0) - self.q2_prev)
                   - self.source)
        acc += self._apply_stiffness(th)
        acc += self._bw * th - self._bsrc
        return acc

    def jacobian_diag(self, theta) -> np.ndarray:
        """Diagonal part of the Jacobian (the rest is the stiffness)."""
        th = np.asarray(theta, dtype=float)
        return (self.grid.volumes
                * (self.c_new * self.fam.c1r(th) / self.tau
                   + 2.0 * self.c_R * np.maximum(th, 0.0))
                + self._bw)

    def potential(self, theta) -> float:
        """Convex merit function; its gradient equals :meth:`residual`."""
        th = np.asarray(theta, dtype=float)
        pos = np.maximum(th, 0.0)
        dens = (self.c_new * (self.fam.E2r(th) - self.e1_prev * th) / self.tau
                + self.c_R * (pos ** 3 / 3.0 - self.q2_prev * th)
                - self.source * th)
        val = float(self.grid.volumes @ dens)
        val += 0.5 * float(th @ self._apply_stiffness(th))
        tb = th[self.grid.boundary_cells]
        val += 0.5 * float(np.sum(self._w * (tb - self.tg) ** 2))
        return val

    def _direction(self, theta, res):
        jd = self.jacobian_diag(theta)
        if self._band is not None:
            upper, diag = self._band
            main = diag + jd
            if theta.size == 1:
                if not main[0] > 0.0:
                    raise SolverError(
                        "temperature Jacobian is not positive definite")
                return -res / main
            ab = np.zeros((2, theta.size))
            ab[0, 1:] = upper
            ab[1] = main
            try:
                return solveh_banded(ab, -res)
            except LinAlgError as exc:
                raise SolverError(
                    "temperature Jacobian is not positive definite") from exc
        from scipy import sparse
        from scipy.sparse.linalg import spsolve
        jac = self._mat + sparse.diags(jd)
        d = spsolve(jac.tocsc(), -res)
        if not float(d @ (jac @ d)) > 0.0:
            raise SolverError("temperature Jacobian is not positive definite")
        return d

    def solve(self, theta_init=None, rtol=1e-11, max_iter=60):
        """Damped Newton iteration on the merit potential.

        Returns ``(theta, iterations, residual_norm)``.  Convergence is
        ``max |residual| <= rtol (1 + max |fixed part|)``; a failed
        line search or iteration cap raises :class:`SolverError` with
        the state range in the message.
        """
        th = (self.theta_prev.copy() if theta_init is None
              else np.asarray(theta_init, dtype=float).copy())
        tol = rtol * (1.0 + self.rhs_norm)
        res = self.residual(th)
        res_norm = float(np.abs(res).max())
        for it in range(max_iter + 1):
            if res_norm <= tol:
                return th, it, res_norm
            if it == max_iter:
                break
            d = self._direction(th, res)
            # full step first: near the solution the potential decrease
            # drops below roundoff while the step is still contracting,
            # so acceptance is judged on the residual there
            trial = th + d
            trial_res = self.residual(trial)
            trial_norm = float(np.abs(trial_res).max())
            if trial_norm <= max(0.5 * res_norm, tol):
                th, res, res_norm = trial, trial_res, trial_norm
                continue
            slope = float(res @ d)
            if not slope < 0.0:
                raise SolverError("Newton direction is not a descent "
                                  "direction; the temperature system lost "
                                  "positive definiteness")
            base = self.potential(th)
            guard = 16.0 * np.finfo(float).eps * max(1.0, abs(base))
            t = 1.0
            while self.potential(th + t * d) > base + 1e-4 * t * slope + guard:
                t *= 0.5
                if t < 1e-12:
                    raise SolverError(
                        f"temperature line search failed; |res| = "
                        f"{res_norm:.3e}, theta in [{th.min():.4g}, "
                        f"{th.max():.4g}]")
            th = th + t * d
            res = self.residual(th)
            res_norm = float(np.abs(res).max())
        raise SolverError(
            f"temperature update did not converge in {max_iter} iterations; "
            f"|res| = {res_norm:.3e}, tol = {tol:.3e}, theta in "
            f"[{th.min():.4g}, {th.max():.4g}]")


# ---------------------------------------------------------------------------
# one full step


@dataclass(frozen=True)
class StepOutcome:
    """All per-step fields a verifier needs."""

    theta: np.ndarray
    chi: np.ndarray
    u: np.ndarray
    load_mean: float       # volume integral of the new increment field
    v_state: float         # container volume state the cells were loaded with
    active: np.ndarray
    newton_iters: int
    cell_iters: int
    source: np.ndarray
    volume_residual: np.ndarray
    phase_multiplier: np.ndarray
    boundary_total: float


def step(fam, grid, tau, theta_prev, chi_prev, u_prev, mean_prev, p_now,
         theta_gamma_now, c_R, coupling="implicit") -> StepOutcome:
    """Advance all fields by one step.

    ``mean_prev`` is the previous volume-increment integral; with
    ``coupling="explicit"`` the container load uses it directly instead
    of solving the mean fixed point, which decouples the step at the
    cost of the exact energy ledger.
    """
    cells = prepare_cells(fam, grid, theta_prev, chi_prev, u_prev, tau)
    p_now = float(p_now)
    if coupling == "implicit":
        sol, mean_new = solve_volume_coupling(cells, grid.volumes, p_now,
                                              mean_init=mean_prev)
        v_state = mean_new + p_now
    elif coupling == "explicit":
        v_state = float(mean_prev) + p_now
        sol = solve_cells(cells, v_state)
        mean_new = integrate_field(grid, sol.u)
    else:
        raise ValueError(f"unknown coupling mode {coupling!r}")

    r_u, xi = cell_residuals(cells, sol, v_state)
    src = heat_source(cells, sol, v_state)
    system = ThetaSystem(fam, grid, tau, theta_prev, chi_prev, sol.chi, src,
                         theta_gamma_now, c_R)
    theta, iters, _ = system.solve(theta_init=theta_prev)
    _, boundary_total = boundary_exchange(grid, theta, theta_gamma_now)
    return StepOutcome(theta=theta, chi=sol.chi, u=sol.u,
                       load_mean=float(mean_new), v_state=float(v_state),
                       active=sol.active, newton_iters=iters,
                       cell_iters=sol.iterations, source=src,
                       volume_residual=r_u, phase_multiplier=xi,
                       boundary_total=boundary_total)


# ---------------------------------------------------------------------------
# full run with verification


@dataclass(frozen=True)
class RunChecks:
    """Which runtime verifications to enforce and at what tolerance."""

    complementarity: bool = True
    comp_tol: float = 1e-10
    energy: bool = True
    energy_rtol: float = 1e-9
    floor: bool = True
    entropy_sign: bool = True


@dataclass(frozen=True)
class RunSpec:
    """Complete description of one simulation run."""

    grid: Grid
    fam: TruncationFamily
    tau: float
    n_steps: int
    theta0: Union[float, np.ndarray]
    chi0: Union[float, np.ndarray]
    u0: Union[float, np.ndarray] = 0.0
    theta_gamma: Union[float, Callable] = None
    p_outer: Union[float, Callable] = 0.0
    c_R: Optional[float] = None      # default: the computed recommendation
    coupling: str = "implicit"
    store: bool = True


@dataclass
class RunResult:
    """Trajectory, per-step diagnostics, and check outcomes."""

    spec: RunSpec
    times: np.ndarray
    thetas: Optional[np.ndarray]
    chis: Optional[np.ndarray]
    us: Optional[np.ndarray]
    theta_gammas: np.ndarray
    p_values: np.ndarray
    load_mean: np.ndarray
    v_states: np.ndarray
    pressure: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray
    chi_min: np.ndarray
    chi_max: np.ndarray
    comp_volume: np.ndarray
    comp_phase: np.ndarray
    newton_iters: np.ndarray
    cell_iters: np.ndarray
    clamp_solid: np.ndarray
    clamp_liquid: np.ndarray
    ledger: list
    energy_checked: bool
    entropy: list
    entropy_total: float
    entropy_min_integrand: float
    floor: np.ndarray
    floor_checked: np.ndarray
    floor_guaranteed: bool
    c_R: float
    c_R_recommended: float
    c_R_below: bool
    tau_ceiling_value: float
    tau_ok: bool
    max_udot: float
    max_chidot: float

    @property
    def entropy_aggregate(self) -> float:
        return self.entropy_total

    def summary_text(self) -> str:
        """Structured pass/fail summary of the run."""
        comp = max(float(self.comp_volume.max()), float(self.comp_phase.max()))
        worst_defect = max((row.defect for row in self.ledger),
                           default=-math.inf)
        energy_word = ("pass" if all(r.ok for r in self.ledger) else "FAIL")
        if not self.energy_checked:
            energy_word += " (report only)"
        margins = self.theta_min - self.floor
        checked = self.floor_checked
        floor_margin = (float(margins[checked].min()) if checked.any()
                        else math.inf)
        floor_word = "pass" if floor_margin >= 0.0 else "FAIL"
        if not self.floor_guaranteed:
            floor_word += " (report only)"
        lines = [
            f"steps                {self.times.size - 1} "
            f"(tau {self.spec.tau:g}, horizon {self.times[-1]:g})",
            f"temperature range    [{self.theta_min.min():.6g}, "
            f"{self.theta_max.max():.6g}]",
            f"phase range          [{self.chi_min.min():.6g}, "
            f"{self.chi_max.max():.6g}]",
            f"complementarity      "
            f"{'pass' if comp <= 1e-10 else 'FAIL'} (max defect {comp:.3e})",
            f"energy ledger        {energy_word} "
            f"(worst defect {worst_defect:.3e})",
            f"temperature floor    {floor_word} "
            f"(worst margin {floor_margin:.3e})",
            f"entropy integrand    "
            f"{'pass' if self.entropy_min_integrand >= 0.0 else 'FAIL'} "
            f"(min {self.entropy_min_integrand:.3e})",
            f"entropy residual     {self.entropy_total:.6e} "
            f"(tau-weighted total)",
            f"stabilization weight {self.c_R:.6g} "
            f"(recommended {self.c_R_recommended:.6g}"
            f"{', BELOW RECOMMENDATION' if self.c_R_below else ''})",
            f"step ceiling         {self.tau_ceiling_value:.6g} "
            f"({'tau ok' if self.tau_ok else 'TAU ABOVE CEILING'})",
        ]
        return "\n".join(lines)


def _as_time_fn(value):
    if callable(value):
        return value
    return lambda t, v=value: v


def run(spec: RunSpec, checks: RunChecks = RunChecks()) -> RunResult:
    """Integrate a run specification with runtime verification.

    Initial and boundary data must lie inside the material's data
    window; violations raise ``ValueError`` before any stepping.  A
    failed runtime check raises :class:`InvariantViolation` carrying
    the step index and the check name.
    """
    grid, fam = spec.grid, spec.fam
    cst = fam.model.constants
    tau = float(spec.tau)
    n_steps = int(spec.n_steps)
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError("tau must be positive and finite")
    if n_steps < 1:
        raise ValueError("need at least one step")
    if spec.coupling not in ("implicit", "explicit"):
        raise ValueError(f"unknown coupling mode {spec.coupling!r}")
    if spec.theta_gamma is None:
        raise ValueError("a run needs boundary temperature data")

    theta = as_field(grid, spec.theta0)
    chi = as_field(grid, spec.chi0)
    u = as_field(grid, spec.u0)
    if np.any(chi < 0.0) or np.any(chi > 1.0):
        raise ValueError("initial phase fraction must lie in [0, 1]")
    lo, hi = cst.theta_star, cst.theta_sup
    if np.any(theta < lo) or np.any(theta > hi):
        raise ValueError(
            f"initial temperature must lie in the data window [{lo}, {hi}]")

    tg_fn = _as_time_fn(spec.theta_gamma)
    p_fn = _as_time_fn(spec.p_outer)

    def resolve_tg(t):
        tg = np.asarray(tg_fn(t), dtype=float)
        if tg.ndim == 0:
            tg = np.full(grid.n_boundary, float(tg))
        if tg.shape != (grid.n_boundary,):
            raise ValueError("boundary temperature has wrong shape")
        if np.any(tg < lo) or np.any(tg > hi):
            raise ValueError(
                f"boundary temperature at t={t:g} leaves the data window "
                f"[{lo}, {hi}]")
        return tg

    c_r_recommended = compute_cR(fam)
    if spec.c_R is None:
        c_r = c_r_recommended
        below = False
    else:
        c_r = float(spec.c_R)
        if c_r < 0.0:
            raise ValueError("the stabilization weight must be nonnegative")
        below = c_r < c_r_recommended * (1.0 - 1e-12)
    floor_guaranteed = checks.floor and not below
    floor = lower_bound_sequence(fam, c_r, tau, n_steps)
    ceiling = tau_ceiling(fam)

    m0 = integrate_field(grid, u)
    p0 = float(p_fn(0.0))
    v0 = m0 + p0
    tg0 = resolve_tg(0.0)

    nb = grid.n_boundary
    theta_gammas = np.empty((n_steps + 1, nb))
    theta_gammas[0] = tg0
    p_values = np.empty(n_steps + 1)
    p_values[0] = p0
    load_mean = np.empty(n_steps + 1)
    load_mean[0] = m0
    v_states = np.empty(n_steps + 1)
    v_states[0] = v0
    pressure = np.empty(n_steps + 1)
    pressure[0] = pressure_recovery(cst, m0, p0)
    theta_min = np.empty(n_steps + 1)
    theta_max = np.empty(n_steps + 1)
    chi_lo = np.empty(n_steps + 1)
    chi_hi = np.empty(n_steps + 1)
    theta_min[0], theta_max[0] = theta.min(), theta.max()
    chi_lo[0], chi_hi[0] = chi.min(), chi.max()
    comp_volume = np.zeros(n_steps + 1)
    comp_phase = np.zeros(n_steps + 1)
    newton_iters = np.zeros(n_steps + 1, dtype=int)
    cell_iters = np.zeros(n_steps + 1, dtype=int)
    clamp_solid = np.zeros(n_steps + 1, dtype=int)
    clamp_liquid = np.zeros(n_steps + 1, dtype=int)
    floor_checked = np.zeros(n_steps + 1, dtype=bool)
    floor_checked[0] = floor_guaranteed

    if spec.store:
        thetas = np.empty((n_steps + 1, grid.n_cells))
        chis = np.empty_like(thetas)
        us = np.empty_like(thetas)
        thetas[0], chis[0], us[0] = theta, chi, u
    else:
        thetas = chis = us = None

    tracker = EnergyTracker(fam, grid, theta, chi, u, v0, p0, c_r, tau,
                            rtol=checks.energy_rtol)
    energy_checked = checks.energy and spec.coupling == "implicit"
    entropy_rows: list[EntropyRow] = []
    entropy_min = math.inf
    max_udot = 0.0
    max_chidot = 0.0
    gate = floor_guaranteed

    for k in range(1, n_steps + 1):
        t_k = k * tau
        tg_k = resolve_tg(t_k)
        p_k = float(p_fn(t_k))
        out = step(fam, grid, tau, theta, chi, u, load_mean[k - 1], p_k,
                   tg_k, c_r, coupling=spec.coupling)

        comp_volume[k] = float(np.abs(out.volume_residual).max())
        comp_phase[k] = _phase_defect(out.chi, out.phase_multiplier)
        if checks.complementarity:
            worst = max(comp_volume[k], comp_phase[k])
            if worst > checks.comp_tol:
                raise InvariantViolation(
                    k, "complementarity",
                    f"defect {worst:.3e} exceeds {checks.comp_tol:.1e}")

        if np.any(out.chi < 0.0) or np.any(out.chi > 1.0):
            raise InvariantViolation(k, "bounds",
                                     "phase fraction left [0, 1]")
        if not np.all(np.isfinite(out.theta)):
            raise InvariantViolation(k, "bounds",
                                     "temperature is not finite")

        th_min = float(out.theta.min())
        gate = gate and float(tg_k.min()) >= floor[k]
        floor_checked[k] = gate
        if gate and th_min < floor[k]:
            raise InvariantViolation(
                k, "floor",
                f"min temperature {th_min:.6e} fell below the floor "
                f"{floor[k]:.6e}")

        if th_min > 0.0:
            row = entropy_step(fam, grid, tau, theta, chi, u, out.theta,
                               out.chi, out.u, tg_k, step=k)
            entropy_rows.append(row)
            entropy_min = min(entropy_min, row.min_integrand)
            if checks.entropy_sign and row.min_integrand < 0.0:
                raise InvariantViolation(
                    k, "entropy",
                    f"production integrand {row.min_integrand:.3e} "
                    "is negative")

        ledger_row = tracker.push(k, t_k, out.theta, out.chi, out.u,
                                  out.v_state, p_k, out.boundary_total)
        if energy_checked and not ledger_row.ok:
            raise InvariantViolation(
                k, "energy",
                f"ledger defect {ledger_row.defect:.3e} exceeds "
                f"{checks.energy_rtol:.1e} x max(1, |rhs|)")

        max_udot = max(max_udot, float(np.abs(out.u - u).max()) / tau)
        max_chidot = max(max_chidot, float(np.abs(out.chi - chi).max()) / tau)
        theta, chi, u = out.theta, out.chi, out.u
        theta_gammas[k] = tg_k
        p_values[k] = p_k
        load_mean[k] = out.load_mean
        v_states[k] = out.v_state
        pressure[k] = pressure_recovery(cst, out.load_mean, p_k)
        theta_min[k], theta_max[k] = th_min, float(out.theta.max())
        chi_lo[k], chi_hi[k] = float(out.chi.min()), float(out.chi.max())
        newton_iters[k] = out.newton_iters
        cell_iters[k] = out.cell_iters
        clamp_solid[k] = int(np.count_nonzero(out.active == -1))
        clamp_liquid[k] = int(np.count_nonzero(out.active == 1))
        if spec.store:
            thetas[k], chis[k], us[k] = out.theta, out.chi, out.u

    return RunResult(
        spec=spec, times=np.arange(n_steps + 1) * tau,
        thetas=thetas, chis=chis, us=us, theta_gammas=theta_gammas,
        p_values=p_values, load_mean=load_mean, v_states=v_states,
        pressure=pressure, theta_min=theta_min, theta_max=theta_max,
        chi_min=chi_lo, chi_max=chi_hi, comp_volume=comp_volume,
        comp_phase=comp_phase, newton_iters=newton_iters,
        cell_iters=cell_iters, clamp_solid=clamp_solid,
        clamp_liquid=clamp_liquid, ledger=tracker.rows,
        energy_checked=energy_checked, entropy=entropy_rows,
        entropy_total=entropy_aggregate(entropy_rows, tau),
        entropy_min_integrand=(entropy_min if entropy_rows else math.inf),
        floor=floor, floor_checked=floor_checked,
        floor_guaranteed=floor_guaranteed, c_R=c_r,
        c_R_recommended=c_r_recommended, c_R_below=below,
        tau_ceiling_value=ceiling, tau_ok=tau <= ceiling,
        max_udot=max_udot, max_chidot=max_chidot)


def _phase_defect(chi, xi) -> float:
    interior = (chi > 0.0) & (chi < 1.0)
    d = np.where(interior, np.abs(xi), 0.0)
    d = np.where(chi == 0.0, np.maximum(xi, 0.0), d)
    d = np.where(chi == 1.0, np.maximum(-xi, 0.0), d)
    return float(d.max()) if d.size else 0.0
