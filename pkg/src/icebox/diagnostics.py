"""Trajectory diagnostics: conservation ledgers, bounds, and studies.

Everything in this module re-derives its quantities from stored states
instead of trusting the stepper's in-flight bookkeeping, so a verified
trajectory file can be re-audited offline.  The energy ledger tracks
the exact telescoped form of the scheme's dissipation estimate, which
closes to rounding error on valid runs and breaks visibly when any
state is tampered with.  The entropy balance and the long-horizon
monitor are evaluated in the same two-point flux geometry the stepper
uses, so their production terms are nonnegative cell by cell and face
by face whenever temperatures are positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .grid import Grid, boundary_exchange, integrate_field
from .materials import TruncationFamily, adaptive_simpson

__all__ = [
    "lower_bound_sequence",
    "theta_floor_limit",
    "LedgerRow",
    "stored_energy",
    "EnergyTracker",
    "energy_ledger_check",
    "EntropyRow",
    "entropy_total",
    "entropy_step",
    "entropy_series",
    "entropy_aggregate",
    "complementarity_series",
    "BoundsReport",
    "bounds_monitor",
    "ExtendedEnergyReport",
    "extended_energy_monitor",
    "PerturbationReport",
    "perturbation_experiment",
    "TauStudyReport",
    "tau_convergence_study",
    "TruncationReport",
    "truncation_study",
]


# ---------------------------------------------------------------------------
# temperature floor


def lower_bound_sequence(fam: TruncationFamily, c_R, tau, n,
                         v0=None, c_star=None) -> np.ndarray:
    """Comparison sequence bounding the temperature from below.

    Starting from the lower data bound, each term solves the scalar
    implicit relation

        c_star (e1r(v_k) - e1r(v_{k-1})) = -tau c_R v_k^2,

    whose root is unique in ``(0, v_{k-1}]`` because the left side
    increases in ``v_k`` while the right side decreases.  With the
    built-in caloric density the recursion has the closed form
    ``v_k = v_{k-1} (1 + 2 c_R tau)^{-1/2}``; the root finder
    reproduces it to near machine precision.

    Parameters
    ----------
    fam : TruncationFamily
        Truncated caloric family of the material being run.
    c_R : float
        Stabilization weight of the quadratic temperature term.
    tau : float
        Time step.
    n : int
        Number of steps; the result has ``n + 1`` entries.
    v0 : float, optional
        Starting value, default the material's lower data bound.
    c_star : float, optional
        Lower bound of the heat capacity, default the declared one.

    Returns
    -------
    numpy.ndarray
        Positive nonincreasing array of length ``n + 1``.
    """
    cst = fam.model.constants
    v0 = cst.theta_star if v0 is None else float(v0)
    c_star = fam.model.bounds.c_low if c_star is None else float(c_star)
    n = int(n)
    if not (v0 > 0.0 and c_star > 0.0 and tau > 0.0 and c_R >= 0.0 and n >= 0):
        raise ValueError("floor sequence needs v0, c_star, tau > 0 and c_R >= 0")
    v = np.empty(n + 1)
    v[0] = v0
    if c_R == 0.0:
        v[1:] = v0
        return v
    rate = tau * float(c_R)
    for k in range(1, n + 1):
        prev = v[k - 1]
        e_prev = fam.e1r(prev)

        def f(z, e_prev=e_prev):
            return c_star * (fam.e1r(z) - e_prev) + rate * z * z

        lo = 0.5 * prev
        while f(lo) > 0.0:
            lo *= 0.5
            if lo < 1e-280:
                raise ValueError("floor sequence collapsed to zero")
        v[k] = brentq(f, lo, prev, xtol=1e-15, rtol=8.9e-16)
    return v


def theta_floor_limit(fam: TruncationFamily, c_R, t,
                      v0=None, c_star=None) -> float:
    """Zero-step-size limit of the floor sequence at time ``t``.

    Solves ``G(z) = -c_R t / c_star`` where ``G(z) = -int_z^{v0}
    c1(s) / s^2 ds``.  For the built-in material this is
    ``v0 exp(-c_R t / c_star)``.  Raises if the integrand is
    integrable near zero and the target is below the reachable range.
    """
    cst = fam.model.constants
    v0 = cst.theta_star if v0 is None else float(v0)
    c_star = fam.model.bounds.c_low if c_star is None else float(c_star)
    if not (v0 > 0.0 and c_star > 0.0 and t >= 0.0 and c_R >= 0.0):
        raise ValueError("floor limit needs v0, c_star > 0 and t, c_R >= 0")
    if t == 0.0 or c_R == 0.0:
        return v0
    target = -float(c_R) * float(t) / c_star
    c1 = fam.model.c1

    def big_g(z):
        return -adaptive_simpson(lambda s: c1(s) / (s * s), z, v0, tol=1e-13)

    # the guard sits well above the underflow threshold of 1/s^2
    lo = 0.5 * v0
    while big_g(lo) > target:
        lo *= 0.5
        if lo < 1e-150:
            raise ValueError(
                "floor integral stays bounded near zero; no positive root")
    return brentq(lambda z: big_g(z) - target, lo, v0,
                  xtol=1e-15, rtol=8.9e-16)


# ---------------------------------------------------------------------------
# energy ledger


@dataclass(frozen=True)
class LedgerRow:
    """One cumulative line of the discrete energy ledger."""

    step: int
    time: float
    lhs: float           # stored energy now plus cumulative boundary outflow
    rhs: float           # initial stored energy plus pressure-work allowance
    defect: float        # lhs - rhs, nonpositive up to rounding on valid runs
    stored: float
    boundary_cum: float
    supply_cum: float
    ok: bool


def stored_energy(fam: TruncationFamily, grid: Grid, theta, chi, u,
                  v_state, c_R, tau) -> float:
    """Stored part of the energy ledger at one time level.

    ``v_state`` is the container volume state (mean volume increment
    plus outer pressure) the cells were loaded with.  The terminal
    quadratic temperature term carries the step weight ``tau`` because
    that is what the per-step work identities telescope into.
    """
    model = fam.model
    cst = model.constants
    theta = np.asarray(theta, dtype=float)
    chi = np.asarray(chi, dtype=float)
    u = np.asarray(u, dtype=float)
    strain = u - 1.0 + chi
    heat = fam.e1r(theta) - fam.f1_theta_c
    dens = (np.asarray(model.c(chi), dtype=float) * heat
            + 0.5 * np.asarray(model.lam(chi), dtype=float) * strain ** 2
            - cst.g * grid.x3 * u + u + 2.0 * chi
            + c_R * tau * theta * np.maximum(theta, 0.0))
    v = float(v_state)
    return (integrate_field(grid, dens)
            + 0.5 * cst.K_Gamma * v * v + cst.g * cst.zeta_Gamma * v)


class EnergyTracker:
    """Running energy ledger for a trajectory as it is generated.

    The ledger inequality is ``lhs(m) <= rhs(m)`` where the right side
    consists of the initial stored energy plus an allowance for outer
    pressure variation.  Convexity of the material coefficients and
    the sign of the constraint reaction make every omitted term at
    worst zero, so any overshoot beyond rounding indicates a defective
    step.
    """

    def __init__(self, fam, grid, theta0, chi0, u0, v_state0, p0,
                 c_R, tau, rtol=1e-9):
        self.fam = fam
        self.grid = grid
        self.c_R = float(c_R)
        self.tau = float(tau)
        self.rtol = float(rtol)
        cst = fam.model.constants
        self._k_gamma = cst.K_Gamma
        self._gz = cst.g * cst.zeta_Gamma
        self.rhs0 = stored_energy(fam, grid, theta0, chi0, u0, v_state0,
                                  c_R, tau)
        self.boundary_cum = 0.0
        self.dp_cum = 0.0
        self.vmax = abs(self._k_gamma * float(v_state0) + self._gz)
        self._p_prev = float(p0)
        self.rows: list[LedgerRow] = []

    def push(self, step, time, theta, chi, u, v_state, p_now,
             boundary_total) -> LedgerRow:
        """Append the ledger line after one completed step."""
        p_now = float(p_now)
        self.dp_cum += abs(p_now - self._p_prev)
        self._p_prev = p_now
        self.vmax = max(self.vmax,
                        abs(self._k_gamma * float(v_state) + self._gz))
        self.boundary_cum += self.tau * float(boundary_total)
        stored = stored_energy(self.fam, self.grid, theta, chi, u,
                               v_state, self.c_R, self.tau)
        lhs = stored + self.boundary_cum
        rhs = self.rhs0 + self.dp_cum * self.vmax
        defect = lhs - rhs
        ok = defect <= self.rtol * max(1.0, abs(rhs))
        row = LedgerRow(step=int(step), time=float(time), lhs=lhs, rhs=rhs,
                        defect=defect, stored=stored,
                        boundary_cum=self.boundary_cum,
                        supply_cum=self.dp_cum * self.vmax, ok=bool(ok))
        self.rows.append(row)
        return row


def energy_ledger_check(fam, grid, tau, thetas, chis, us, v_states,
                        p_values, theta_gammas, c_R,
                        rtol=1e-9) -> list:
    """Recompute the full ledger for a stored trajectory from scratch.

    Arrays are stacked per time level, boundary data per step; row 0
    holds initial data.  Returns one :class:`LedgerRow` per step.  Any
    mutation of the stored states (for example inflating the final
    temperature) shows up as a positive defect far beyond ``rtol``.
    """
    thetas = np.asarray(thetas, dtype=float)
    n_steps = thetas.shape[0] - 1
    tracker = EnergyTracker(fam, grid, thetas[0], chis[0], us[0],
                            v_states[0], p_values[0], c_R, tau, rtol=rtol)
    for k in range(1, n_steps + 1):
        _, bnd = boundary_exchange(grid, thetas[k], theta_gammas[k])
        tracker.push(k, k * tau, thetas[k], chis[k], us[k], v_states[k],
                     p_values[k], bnd)
    return tracker.rows


# ---------------------------------------------------------------------------
# entropy balance


@dataclass(frozen=True)
class EntropyRow:
    """One line of the discrete entropy balance."""

    step: int
    time: float
    total: float
    production: float
    flux: float
    residual: float       # rate minus production minus flux
    min_integrand: float  # most negative production term (should be >= 0)


def entropy_total(fam: TruncationFamily, grid: Grid, theta, chi, u) -> float:
    """Volume integral of the entropy density."""
    dens = (np.asarray(fam.model.c(chi), dtype=float) * fam.s1r(theta)
            + 2.0 * np.asarray(chi, dtype=float) + np.asarray(u, dtype=float))
    return integrate_field(grid, dens)


def _resolve_boundary(grid: Grid, theta_gamma) -> np.ndarray:
    tg = np.asarray(theta_gamma, dtype=float)
    if tg.ndim == 0:
        tg = np.full(grid.n_boundary, float(tg))
    if tg.shape != (grid.n_boundary,):
        raise ValueError("boundary data has wrong shape")
    return tg


def _production(fam, grid, tau, theta_prev, chi_prev, theta, chi, udot,
                chidot):
    """Dissipation terms: conduction plus phase and volume rate friction.

    Uses the same lagged conductivity and two-point face geometry as
    the heat operator, so each term is nonnegative whenever the
    temperatures are positive.
    """
    model = fam.model
    th = np.asarray(theta, dtype=float)
    kap = np.asarray(model.kappa(chi_prev), dtype=float)
    kf = 0.5 * (kap[grid.faces_left] + kap[grid.faces_right]) * grid.face_trans
    jump = th[grid.faces_left] - th[grid.faces_right]
    face_terms = kf * jump ** 2 / (th[grid.faces_left] * th[grid.faces_right])
    gam = np.asarray(model.gamma(theta_prev), dtype=float)
    cell_terms = grid.volumes * (gam * chidot ** 2 + udot ** 2) / th
    worst = float(cell_terms.min()) if cell_terms.size else 0.0
    if face_terms.size:
        worst = min(worst, float(face_terms.min()))
    return float(face_terms.sum() + cell_terms.sum()), worst


def entropy_step(fam, grid, tau, theta_prev, chi_prev, u_prev,
                 theta, chi, u, theta_gamma, step=0) -> EntropyRow:
    """Entropy balance line for one completed step."""
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0.0):
        raise ValueError("entropy balance needs positive temperatures")
    chidot = (np.asarray(chi, float) - np.asarray(chi_prev, float)) / tau
    udot = (np.asarray(u, float) - np.asarray(u_prev, float)) / tau
    production, worst = _production(fam, grid, tau, theta_prev, chi_prev,
                                    theta, chi, udot, chidot)
    tg = _resolve_boundary(grid, theta_gamma)
    w = grid.boundary_h * grid.boundary_measure
    tb = th[grid.boundary_cells]
    flux = float(np.sum(w * (tg - tb) / tb))
    total = entropy_total(fam, grid, theta, chi, u)
    prev_total = entropy_total(fam, grid, theta_prev, chi_prev, u_prev)
    residual = (total - prev_total) / tau - production - flux
    return EntropyRow(step=int(step), time=float(step) * tau, total=total,
                      production=production, flux=flux, residual=residual,
                      min_integrand=worst)


def entropy_series(fam, grid, tau, thetas, chis, us,
                   theta_gammas) -> list:
    """Entropy balance lines for a stored trajectory."""
    thetas = np.asarray(thetas, dtype=float)
    rows = []
    for k in range(1, thetas.shape[0]):
        rows.append(entropy_step(fam, grid, tau, thetas[k - 1], chis[k - 1],
                                 us[k - 1], thetas[k], chis[k], us[k],
                                 theta_gammas[k], step=k))
    return rows


def entropy_aggregate(rows: Sequence[EntropyRow], tau) -> float:
    """Time-weighted total of the absolute balance residuals."""
    return float(tau) * float(sum(abs(r.residual) for r in rows))


# ---------------------------------------------------------------------------
# complementarity recheck


def complementarity_series(fam, grid, tau, thetas, chis, us, v_states):
    """Re-derive the cell-equation defects for a stored trajectory.

    Returns ``(volume_defect, phase_defect)`` arrays with one entry per
    step: the largest volume-equation residual and the largest
    violation of the constraint-reaction sign pattern (zero on
    interior cells, nonpositive where the solid clamp is active,
    nonnegative on the liquid clamp).
    """
    from .cellsolve import CellSolution, cell_residuals, prepare_cells
    thetas = np.asarray(thetas, dtype=float)
    n_steps = thetas.shape[0] - 1
    vol = np.zeros(n_steps + 1)
    phase = np.zeros(n_steps + 1)
    for k in range(1, n_steps + 1):
        cells = prepare_cells(fam, grid, thetas[k - 1], chis[k - 1],
                              us[k - 1], tau)
        chi = np.asarray(chis[k], dtype=float)
        sol = CellSolution(u=np.asarray(us[k], dtype=float), chi=chi,
                           active=np.zeros(chi.size, dtype=np.int8),
                           iterations=0)
        r_u, xi = cell_residuals(cells, sol, v_states[k])
        interior = (chi > 0.0) & (chi < 1.0)
        defect = np.where(interior, np.abs(xi), 0.0)
        defect = np.where(chi == 0.0, np.maximum(xi, 0.0), defect)
        defect = np.where(chi == 1.0, np.maximum(-xi, 0.0), defect)
        vol[k] = float(np.max(np.abs(r_u)))
        phase[k] = float(np.max(defect))
    return vol, phase


# ---------------------------------------------------------------------------
# bounds monitor


@dataclass(frozen=True)
class BoundsReport:
    """Extreme values of a trajectory against the a priori envelopes."""

    theta_min: float
    theta_max: float
    chi_min: float
    chi_max: float
    u_max: float
    udot_max: float
    chidot_max: float
    cutoff: float            # truncation threshold of the caloric family
    cutoff_margin: float     # cutoff minus the largest temperature seen
    volume_envelope: float   # implied constant in (|U|+|U'|) <= C (1 + cutoff)
    phase_rate_envelope: float
    floor_ok: Optional[bool]
    floor_worst: float       # min over checked steps of min_x theta_k - v_k

    def to_text(self) -> str:
        lines = [
            f"theta range        [{self.theta_min:.6g}, {self.theta_max:.6g}]",
            f"chi range          [{self.chi_min:.6g}, {self.chi_max:.6g}]",
            f"max |U|            {self.u_max:.6g}",
            f"max |U| rate       {self.udot_max:.6g}",
            f"max phase rate     {self.chidot_max:.6g}",
            f"truncation cutoff  {self.cutoff:.6g} "
            f"(margin {self.cutoff_margin:.6g})",
            f"volume envelope C  {self.volume_envelope:.6g}",
            f"phase rate env. C  {self.phase_rate_envelope:.6g}",
        ]
        if self.floor_ok is None:
            lines.append("floor check        not run")
        else:
            word = "pass" if self.floor_ok else "FAIL"
            lines.append(f"floor check        {word} "
                         f"(worst margin {self.floor_worst:.3g})")
        return "\n".join(lines)


def bounds_monitor(fam, grid, tau, thetas, chis, us, floor=None,
                   floor_checked=None) -> BoundsReport:
    """Survey a stored trajectory against its structural envelopes.

    The two envelope constants are reported, not asserted: the theory
    only provides them up to a horizon-dependent factor.  The floor
    comparison is asserted where ``floor_checked`` is true (default:
    everywhere a floor is given).
    """
    thetas = np.asarray(thetas, dtype=float)
    chis = np.asarray(chis, dtype=float)
    us = np.asarray(us, dtype=float)
    udot = np.abs(np.diff(us, axis=0)).max() / tau if us.shape[0] > 1 else 0.0
    chidot = (np.abs(np.diff(chis, axis=0)).max() / tau
              if chis.shape[0] > 1 else 0.0)
    u_max = float(np.abs(us).max())
    b = fam.B
    env_vol = (u_max + udot) / (1.0 + b)
    env_phase = chidot / (1.0 + b + b * b + abs(fam.f1B))
    floor_ok = None
    floor_worst = math.inf
    if floor is not None:
        floor = np.asarray(floor, dtype=float)
        checked = (np.ones(floor.size, dtype=bool) if floor_checked is None
                   else np.asarray(floor_checked, dtype=bool))
        margins = thetas.min(axis=1) - floor
        if np.any(checked):
            floor_worst = float(margins[checked].min())
            floor_ok = bool(floor_worst >= 0.0)
        else:
            floor_ok = True
    return BoundsReport(
        theta_min=float(thetas.min()), theta_max=float(thetas.max()),
        chi_min=float(chis.min()), chi_max=float(chis.max()),
        u_max=u_max, udot_max=float(udot), chidot_max=float(chidot),
        cutoff=b, cutoff_margin=float(b - thetas.max()),
        volume_envelope=float(env_vol),
        phase_rate_envelope=float(env_phase),
        floor_ok=floor_ok, floor_worst=floor_worst)


# ---------------------------------------------------------------------------
# long-horizon extended energy monitor


@dataclass(frozen=True)
class ExtendedEnergyReport:
    """Entropy-weighted energy combination along a trajectory.

    ``values[k]`` collects the instantaneous part plus all cumulative
    dissipation and boundary mismatch up to step ``k``; boundedness of
    ``sup_value`` on long horizons is the point of the estimate.  The
    boundary terms are assembled through the exact quadratic split

        (th - a)(th - b) / th = (th - sqrt(ab))^2 / th
                                - (sqrt(b) - sqrt(a))^2,

    and ``identity_defect`` reports how far the two evaluations drift
    apart numerically.
    """

    theta_bar: float
    values: np.ndarray
    stored: np.ndarray
    dissipation_cum: np.ndarray
    boundary_cum: np.ndarray
    identity_defect: float
    sup_value: float


def extended_energy_monitor(fam, grid, tau, thetas, chis, us,
                            theta_gammas, theta_bar=None) -> ExtendedEnergyReport:
    """Evaluate the long-horizon energy combination for a trajectory.

    ``theta_bar`` is the constant reference boundary temperature; by
    default the time average of the boundary data mean, clipped to the
    material's data window.
    """
    cst = fam.model.constants
    thetas = np.asarray(thetas, dtype=float)
    n_steps = thetas.shape[0] - 1
    w = grid.boundary_h * grid.boundary_measure
    w_total = float(w.sum())
    if theta_bar is None:
        if w_total > 0.0 and n_steps > 0:
            means = [float(np.sum(w * _resolve_boundary(grid, theta_gammas[k]))
                           / w_total) for k in range(1, n_steps + 1)]
            theta_bar = float(np.clip(np.mean(means), cst.theta_star,
                                      cst.theta_sup))
        else:
            theta_bar = cst.theta_star
    theta_bar = float(theta_bar)
    if theta_bar <= 0.0:
        raise ValueError("reference boundary temperature must be positive")

    stored = np.empty(n_steps + 1)
    diss_cum = np.zeros(n_steps + 1)
    bnd_cum = np.zeros(n_steps + 1)
    identity_defect = 0.0
    for k in range(n_steps + 1):
        th = thetas[k]
        stored[k] = integrate_field(grid, fam.e1r(th) + np.asarray(us[k]) ** 2)
        if k == 0:
            continue
        if np.any(th <= 0.0):
            raise ValueError("extended energy monitor needs positive "
                             "temperatures")
        chidot = (np.asarray(chis[k], float)
                  - np.asarray(chis[k - 1], float)) / tau
        udot = (np.asarray(us[k], float) - np.asarray(us[k - 1], float)) / tau
        production, _ = _production(fam, grid, tau, thetas[k - 1],
                                    chis[k - 1], th, chis[k], udot, chidot)
        tg = _resolve_boundary(grid, theta_gammas[k])
        tb = th[grid.boundary_cells]
        mismatch = float(np.sum(w * (tb - np.sqrt(theta_bar * tg)) ** 2 / tb))
        direct = w * (tb - tg) * (tb - theta_bar) / tb
        split = (w * (tb - np.sqrt(theta_bar * tg)) ** 2 / tb
                 - w * (np.sqrt(theta_bar) - np.sqrt(tg)) ** 2)
        if direct.size:
            scale = max(1.0, float(np.abs(direct).max()))
            identity_defect = max(identity_defect,
                                  float(np.abs(direct - split).max()) / scale)
        diss_cum[k] = diss_cum[k - 1] + tau * theta_bar * production
        bnd_cum[k] = bnd_cum[k - 1] + tau * mismatch
    values = stored + diss_cum + bnd_cum
    return ExtendedEnergyReport(
        theta_bar=theta_bar, values=values, stored=stored,
        dissipation_cum=diss_cum, boundary_cum=bnd_cum,
        identity_defect=identity_defect, sup_value=float(values.max()))


# ---------------------------------------------------------------------------
# data-perturbation study


@dataclass(frozen=True)
class PerturbationRow:
    delta: float
    numerator: float
    denominator: float
    ratio: float


@dataclass(frozen=True)
class PerturbationReport:
    """Stability quotients for a family of data perturbation sizes."""

    fields: tuple
    rows: tuple
    ratio_spread: float   # max/min of the quotients over positive sizes

    def to_text(self) -> str:
        lines = ["delta        numerator     denominator   quotient"]
        for r in self.rows:
            lines.append(f"{r.delta:<12.3e} {r.numerator:<13.6e} "
                         f"{r.denominator:<13.6e} {r.ratio:.6e}")
        lines.append(f"quotient spread (max/min): {self.ratio_spread:.6g}")
        return "\n".join(lines)


def _sine_profile(rng, coords, modes):
    lo, hi = float(coords.min()), float(coords.max())
    span = hi - lo if hi > lo else 1.0
    xi = (coords - lo) / span
    coeff = rng.uniform(-1.0, 1.0, size=modes)
    out = np.zeros_like(xi)
    for j, a in enumerate(coeff):
        out += a * np.sin(math.pi * (j + 1) * xi)
    return out


def _unit_field(rng, grid, modes):
    s = _sine_profile(rng, grid.centers[:, 0], modes)
    norm = math.sqrt(integrate_field(grid, s * s))
    return s / norm if norm > 0.0 else s


def _unit_signal(rng, horizon, modes):
    coeff = rng.uniform(-1.0, 1.0, size=modes)

    def signal(t):
        acc = 0.0
        for j, a in enumerate(coeff):
            acc += a * math.sin(math.pi * (j + 1) * t / horizon)
        return acc

    return signal


def perturbation_experiment(spec, deltas=(1e-2, 1e-3, 1e-4),
                            fields=("theta0", "chi0", "u0", "p_outer",
                                    "theta_gamma"),
                            seed=20260814, modes=3) -> PerturbationReport:
    """Measure the data-to-solution stability quotient of a run.

    For each size ``delta``, the selected data fields are shifted by
    fixed random low-mode profiles scaled by ``delta`` and the run is
    repeated.  The quotient divides the squared trajectory deviation
    (time-integrated for the temperature, worst-over-time for the
    phase fraction and volume increment) by the squared data
    deviation.  For a stable scheme the quotient is flat in ``delta``;
    ``delta = 0`` reproduces the base run bitwise, giving a zero
    numerator.

    The underlying two-trajectory estimate needs a conductivity that
    does not depend on the phase fraction, so materials with a varying
    conductivity are refused.
    """
    from .stepper import run

    model = spec.fam.model
    kv = np.asarray(model.kappa(np.linspace(0.0, 1.0, 41)), dtype=float)
    if float(kv.max() - kv.min()) > 1e-12 * max(1.0, float(np.abs(kv).max())):
        raise ValueError("perturbation quotients need a constant "
                         "conductivity; this material's varies with the "
                         "phase fraction")

    grid = spec.grid
    tau = spec.tau
    horizon = tau * spec.n_steps
    rng = np.random.default_rng(seed)
    shape_theta = _unit_field(rng, grid, modes)
    shape_chi = _unit_field(rng, grid, modes)
    shape_u = _unit_field(rng, grid, modes)
    signal_p = _unit_signal(rng, horizon, modes)
    signal_tg = _unit_signal(rng, horizon, modes)

    base = run(spec)
    w = grid.boundary_h * grid.boundary_measure

    def perturbed_spec(delta):
        changes = {}
        if "theta0" in fields:
            changes["theta0"] = base.thetas[0] + delta * shape_theta
        if "chi0" in fields:
            changes["chi0"] = base.chis[0] + delta * shape_chi
        if "u0" in fields:
            changes["u0"] = base.us[0] + delta * shape_u
        if "p_outer" in fields:
            base_p = spec.p_outer
            changes["p_outer"] = (lambda t, f=base_p:
                                  float(_data_value(f, t))
                                  + delta * signal_p(t))
        if "theta_gamma" in fields:
            base_tg = spec.theta_gamma
            changes["theta_gamma"] = (
                lambda t, f=base_tg:
                np.asarray(_data_value(f, t), dtype=float)
                + delta * signal_tg(t))
        return replace(spec, **changes)

    rows = []
    for delta in deltas:
        other = run(perturbed_spec(float(delta)))
        dth = other.thetas - base.thetas
        dchi = other.chis - base.chis
        du = other.us - base.us
        th_sq = np.array([integrate_field(grid, dth[k] ** 2)
                          for k in range(dth.shape[0])])
        mech_sq = np.array([integrate_field(grid, dchi[k] ** 2)
                            + integrate_field(grid, du[k] ** 2)
                            for k in range(dth.shape[0])])
        numerator = tau * float(th_sq[1:].sum()) + float(mech_sq.max())
        denominator = th_sq[0] + mech_sq[0]
        for k in range(1, spec.n_steps + 1):
            t = k * tau
            if "p_outer" in fields:
                dp = (float(_data_value(other.spec.p_outer, t))
                      - float(_data_value(spec.p_outer, t)))
                denominator += tau * dp * dp
            if "theta_gamma" in fields:
                dtg = (_resolve_boundary(
                    grid, _data_value(other.spec.theta_gamma, t))
                    - _resolve_boundary(grid,
                                        _data_value(spec.theta_gamma, t)))
                denominator += tau * float(np.sum(w * dtg * dtg))
        ratio = numerator / denominator if denominator > 0.0 else math.nan
        rows.append(PerturbationRow(delta=float(delta),
                                    numerator=float(numerator),
                                    denominator=float(denominator),
                                    ratio=float(ratio)))
    ratios = [r.ratio for r in rows if r.delta > 0.0 and r.denominator > 0.0]
    spread = (max(ratios) / min(ratios)
              if ratios and min(ratios) > 0.0 else math.nan)
    return PerturbationReport(fields=tuple(fields), rows=tuple(rows),
                              ratio_spread=float(spread))


def _data_value(f, t):
    return f(t) if callable(f) else f


# ---------------------------------------------------------------------------
# step-refinement study


@dataclass(frozen=True)
class TauStudyReport:
    """Self-convergence of trajectories under step halving."""

    taus: tuple
    distances: tuple       # combined space-time gap between adjacent levels
    ratios: tuple          # successive distance ratios
    entropy_aggregates: tuple
    ratio_bound: float
    ok: bool
    entropy_decreasing: bool

    def to_text(self) -> str:
        lines = ["tau           gap to next     entropy residual"]
        for j, tau in enumerate(self.taus):
            gap = f"{self.distances[j]:.6e}" if j < len(self.distances) else "-"
            lines.append(f"{tau:<13.6e} {gap:<15} "
                         f"{self.entropy_aggregates[j]:.6e}")
        lines.append("ratios: " + ", ".join(f"{r:.4f}" for r in self.ratios))
        lines.append(f"first-order decay (<= {self.ratio_bound}): "
                     + ("pass" if self.ok else "FAIL"))
        lines.append("entropy residual decreasing: "
                     + ("pass" if self.entropy_decreasing else "FAIL"))
        return "\n".join(lines)


def tau_convergence_study(spec, levels=3, ratio_bound=0.67) -> TauStudyReport:
    """Run the same problem at halved steps and compare trajectories.

    Level ``j`` uses step ``tau / 2^j``.  The distance between levels
    ``j`` and ``j+1`` is the combined space-time norm of the state gap
    (temperature, phase fraction, volume increment), with the finer
    run subsampled at even indices.  First-order stepping makes the
    distances shrink by about half per level.
    """
    from .stepper import run

    if levels < 1:
        raise ValueError("need at least one refinement level")
    runs = []
    for j in range(levels + 1):
        spec_j = replace(spec, tau=spec.tau / 2 ** j,
                         n_steps=spec.n_steps * 2 ** j)
        runs.append(run(spec_j))
    grid = spec.grid
    distances = []
    for j in range(levels):
        coarse, fine = runs[j], runs[j + 1]
        idx = np.arange(0, fine.thetas.shape[0], 2)
        acc = 0.0
        for k in range(1, coarse.thetas.shape[0]):
            acc += (integrate_field(grid, (coarse.thetas[k]
                                           - fine.thetas[idx[k]]) ** 2)
                    + integrate_field(grid, (coarse.chis[k]
                                             - fine.chis[idx[k]]) ** 2)
                    + integrate_field(grid, (coarse.us[k]
                                             - fine.us[idx[k]]) ** 2))
        distances.append(math.sqrt(coarse.spec.tau * acc))
    ratios = [distances[j + 1] / distances[j] for j in range(levels - 1)]
    aggregates = [r.entropy_aggregate for r in runs]
    ok = all(r <= ratio_bound for r in ratios)
    decreasing = all(aggregates[j + 1] < aggregates[j]
                     for j in range(levels))
    return TauStudyReport(
        taus=tuple(r.spec.tau for r in runs), distances=tuple(distances),
        ratios=tuple(ratios), entropy_aggregates=tuple(aggregates),
        ratio_bound=float(ratio_bound), ok=bool(ok),
        entropy_decreasing=bool(decreasing))


# ---------------------------------------------------------------------------
# truncation-inactivity study


@dataclass(frozen=True)
class TruncationReport:
    """Trajectory agreement between two truncation levels.

    Above the activity threshold the cutoff never engages, so raising
    it must leave the trajectory unchanged except for rounding.  The
    stabilization weight is held at the base level's value for both
    runs; it multiplies an explicit term of the scheme, so changing it
    would alter the trajectory at first order in the step size and mask
    the comparison.
    """

    r_base: float
    r_high: float
    c_R: float
    sup_gap_theta: float
    sup_gap_chi: float
    sup_gap_u: float
    theta_max: float
    cutoff_base: float
    cutoff_margin: float
    tol: float
    ok: bool

    def to_text(self) -> str:
        word = "pass" if self.ok else "FAIL"
        return "\n".join([
            f"truncation levels  {self.r_base:g} vs {self.r_high:g}",
            f"stabilization      {self.c_R:.6g} (held fixed)",
            f"sup gap theta      {self.sup_gap_theta:.3e}",
            f"sup gap phase      {self.sup_gap_chi:.3e}",
            f"sup gap volume     {self.sup_gap_u:.3e}",
            f"max temperature    {self.theta_max:.6g} "
            f"(cutoff {self.cutoff_base:.6g}, "
            f"margin {self.cutoff_margin:.6g})",
            f"inactive to {self.tol:g}: {word}",
        ])


def truncation_study(spec, factor=2.0, tol=1e-8) -> TruncationReport:
    """Rerun at a raised truncation level and compare trajectories.

    Requires that even the base cutoff stays above every temperature
    seen; the report fails if the trajectories drift apart beyond
    ``tol`` in the sup norm or if the base cutoff is ever approached.
    """
    from .materials import truncate_family
    from .stepper import compute_cR, run

    if factor <= 1.0:
        raise ValueError("the raised truncation level must exceed the base")
    fam = spec.fam
    fam_high = truncate_family(fam.model, factor * fam.R)
    c_R = spec.c_R if spec.c_R is not None else compute_cR(fam)
    base = run(replace(spec, c_R=c_R))
    high = run(replace(spec, fam=fam_high, c_R=c_R))
    gap_theta = float(np.abs(base.thetas - high.thetas).max())
    gap_chi = float(np.abs(base.chis - high.chis).max())
    gap_u = float(np.abs(base.us - high.us).max())
    theta_max = float(base.thetas.max())
    margin = fam.B - theta_max
    ok = gap_theta <= tol and gap_chi <= tol and gap_u <= tol and margin > 0.0
    return TruncationReport(
        r_base=fam.R, r_high=fam_high.R, c_R=float(c_R),
        sup_gap_theta=gap_theta, sup_gap_chi=gap_chi, sup_gap_u=gap_u,
        theta_max=theta_max, cutoff_base=fam.B, cutoff_margin=float(margin),
        tol=float(tol), ok=bool(ok))
