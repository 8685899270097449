"""Acceptance sweep: ten scenario-level properties, one test each.

Every test evaluates its conditions first, prints a single pass/fail
line (visible with ``pytest -s``), and only then asserts, so the
printed line is emitted for failures too.  The shared scenario is a
full freeze of the reference material in a gravity-loaded elastic
container: 200 cells, step 1e-3, horizon 1, boundary held at the
lower data bound.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from icebox.cellsolve import (StepCells, coupling_terms, increment_map,
                              prepare_cells, solve_cells)
from icebox.diagnostics import (energy_ledger_check, lower_bound_sequence,
                                perturbation_experiment,
                                tau_convergence_study, theta_floor_limit,
                                truncation_study)
from icebox.grid import build_grid
from icebox.materials import (Constants, builtin_material,
                              reference_material, truncate_family)
from icebox.stepper import RunSpec, ThetaSystem, run

SCEN = Constants(g=0.1, zeta_Gamma=0.5, K_Gamma=0.5, theta_star=0.5)
FAM = truncate_family(reference_material(SCEN), 4.0)
FAM_DEFAULT = truncate_family(reference_material(), 4.0)


def report(num, ok, label, detail=""):
    word = "pass" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"criterion {num:02d} {word}: {label}{suffix}")


@pytest.fixture(scope="module")
def freeze():
    grid = build_grid(1, (1.0,), (200,), h=1.0)
    spec = RunSpec(grid=grid, fam=FAM, tau=1e-3, n_steps=1000,
                   theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=0.5,
                   p_outer=0.0)
    start = time.perf_counter()
    res = run(spec)
    elapsed = time.perf_counter() - start
    return spec, res, elapsed


@pytest.fixture(scope="module")
def halving_study(freeze):
    spec, _, _ = freeze
    # halving ladder anchored above the scenario step so the scenario
    # step itself is one of the levels
    return tau_convergence_study(replace(spec, tau=4e-3, n_steps=250),
                                 levels=3)


def test_criterion_01_phase_bounds_complementarity_runtime(freeze):
    _, res, elapsed = freeze
    in_bounds = bool(np.all((res.chis >= 0.0) & (res.chis <= 1.0)))
    worst = max(float(res.comp_volume.max()), float(res.comp_phase.max()))
    ok = in_bounds and worst <= 1e-10 and elapsed < 10.0
    report(1, ok, "phase bounds, complementarity, runtime",
           f"max residual {worst:.2e}, {elapsed:.1f} s")
    assert in_bounds
    assert worst <= 1e-10
    assert elapsed < 10.0


def test_criterion_02_energy_ledger_and_mutation(freeze):
    spec, res, _ = freeze
    held = all(r.defect <= 1e-9 * max(1.0, abs(r.rhs)) for r in res.ledger)
    rows = energy_ledger_check(FAM, spec.grid, spec.tau, res.thetas,
                               res.chis, res.us, res.v_states,
                               res.p_values, res.theta_gammas, res.c_R)
    recheck = all(r.ok for r in rows)
    bad = res.thetas.copy()
    bad[-1] *= 1.1
    rows_bad = energy_ledger_check(FAM, spec.grid, spec.tau, bad, res.chis,
                                   res.us, res.v_states, res.p_values,
                                   res.theta_gammas, res.c_R)
    last = rows_bad[-1]
    caught = (not last.ok) and last.defect > 1e-9 * max(1.0, abs(last.rhs))
    ok = held and recheck and caught
    report(2, ok, "cumulative energy inequality, mutation detected",
           f"worst defect {max(r.defect for r in rows):.2e}, "
           f"mutated defect {last.defect:.2e}")
    assert held and recheck and caught


def test_criterion_03_temperature_floor(freeze):
    spec, res, _ = freeze
    above = bool(np.all(res.theta_min >= res.floor))
    k = np.arange(res.floor.size)
    closed = res.floor[0] * (1.0 + 2.0 * res.c_R * spec.tau) ** (-0.5 * k)
    gap = float(np.abs(res.floor - closed).max())
    # continuum limit under step halving; a moderate weight keeps the
    # first-order error term visible
    limit = theta_floor_limit(FAM_DEFAULT, 1.0, 1.0)
    errs = [abs(lower_bound_sequence(FAM_DEFAULT, 1.0, tau,
                                     round(1.0 / tau))[-1] - limit)
            for tau in (4e-3, 2e-3, 1e-3)]
    ratios = [errs[j + 1] / errs[j] for j in range(2)]
    halves = all(0.4 <= r <= 0.6 for r in ratios)
    ok = above and gap <= 1e-10 and halves
    report(3, ok, "positive floor, closed form, limit convergence",
           f"closed-form gap {gap:.2e}, "
           f"halving ratios {ratios[0]:.3f}/{ratios[1]:.3f}")
    assert above
    assert gap <= 1e-10
    assert halves


def brute_force_cell(cells, load, width=101, levels=3):
    """Dense argmin of the joint residual merit over a (U, chi) box."""
    m = width * width

    def rep(v):
        return np.full(m, v[0])

    wide = StepCells(cells.fam, cells.tau, rep(cells.theta_prev),
                     rep(cells.chi_prev), rep(cells.u_prev),
                     rep(cells.q_prev), rep(cells.gap_prev),
                     rep(cells.lam_prev), rep(cells.gamma_prev),
                     rep(cells.pull))
    tau = float(cells.tau)
    u_p, chi_p = float(cells.u_prev[0]), float(cells.chi_prev[0])
    gam = float(cells.gamma_prev[0])
    u_lo, u_hi = u_p - 1.0, u_p + 1.0
    c_lo, c_hi = 0.0, 1.0
    u_best = c_best = None
    for _ in range(levels):
        us = np.linspace(u_lo, u_hi, width)
        cs = np.linspace(c_lo, c_hi, width)
        uu, cc = (a.ravel() for a in np.meshgrid(us, cs, indexing="ij"))
        A, B, C = coupling_terms(wide, uu, cc, load)
        r_u = (uu - u_p) / tau - wide.q_prev + A
        force = gam * (cc - chi_p) / tau + B + C
        comp = np.abs(force)
        comp = np.where(cc <= 0.0, np.maximum(0.0, -force), comp)
        comp = np.where(cc >= 1.0, np.maximum(0.0, force), comp)
        # scaling both defects by tau balances their slopes, so the
        # argmin resolves each coordinate to about one grid cell
        merit = np.maximum(tau * np.abs(r_u), tau * comp)
        j = int(np.argmin(merit))
        iu, ic = divmod(j, width)
        du, dc = us[1] - us[0], cs[1] - cs[0]
        u_best, c_best = float(us[iu]), float(cs[ic])
        u_lo, u_hi = u_best - 3.0 * du, u_best + 3.0 * du
        c_lo = max(0.0, c_best - 3.0 * dc)
        c_hi = min(1.0, c_best + 3.0 * dc)
    return u_best, c_best


def test_criterion_04_cell_solver_oracle_and_monotonicity():
    cst = Constants(g=0.2, zeta_Gamma=0.4, K_Gamma=0.7)
    fam = truncate_family(reference_material(cst), 4.0)
    one = build_grid(1, (1.0,), (1,), h=1.0)
    rng = np.random.default_rng(0)
    worst_u = worst_chi = 0.0
    m_min = np.inf
    for _ in range(1000):
        cells = prepare_cells(
            fam, one,
            np.array([rng.uniform(0.05, 3.0)]),
            np.array([rng.uniform(0.0, 1.0)]),
            np.array([rng.uniform(-0.5, 1.5)]),
            float(rng.uniform(1e-3, 2e-2)))
        load = float(rng.uniform(-1.0, 1.0))
        sol = solve_cells(cells, load)
        u_ref, chi_ref = brute_force_cell(cells, load)
        worst_u = max(worst_u, abs(float(sol.u[0]) - u_ref))
        worst_chi = max(worst_chi, abs(float(sol.chi[0]) - chi_ref))

        u_pair = rng.uniform(-1.5, 2.5, 2)
        c_pair = rng.uniform(0.0, 1.0, 2)
        fu, fchi = increment_map(cells, u_pair, c_pair)
        d_u, d_c = u_pair[0] - u_pair[1], c_pair[0] - c_pair[1]
        nrm = d_u * d_u + d_c * d_c
        if nrm < 1e-12:
            continue
        inner = float((fu[0] - fu[1]) * d_u + (fchi[0] - fchi[1]) * d_c)
        m_min = min(m_min, inner / nrm)
    ok = worst_u <= 2e-3 and worst_chi <= 2e-3 and m_min > 0.0
    report(4, ok, "cell solve matches dense search, map monotone",
           f"max |dU| {worst_u:.2e}, max |dchi| {worst_chi:.2e}, "
           f"m {m_min:.3g}")
    assert worst_u <= 2e-3
    assert worst_chi <= 2e-3
    assert m_min > 0.0


def test_criterion_05_stationarity():
    grid = build_grid(1, (1.0,), (100,), h=1.0)
    spec = RunSpec(grid=grid, fam=FAM_DEFAULT, tau=1e-3, n_steps=1000,
                   theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=1.0,
                   p_outer=0.0)
    res = run(spec)
    drift = max(float(np.abs(res.thetas - 1.0).max()),
                float(np.abs(res.chis - 1.0).max()),
                float(np.abs(res.us).max()))
    ok = drift <= 1e-12
    report(5, ok, "liquid equilibrium preserved over 1000 steps",
           f"max drift {drift:.2e}")
    assert drift <= 1e-12


def test_criterion_06_truncation_inactive(freeze):
    spec, _, _ = freeze
    study = truncation_study(spec, factor=2.0, tol=1e-8)
    gap = max(study.sup_gap_theta, study.sup_gap_chi, study.sup_gap_u)
    ok = study.ok and gap <= 1e-8 and study.cutoff_margin > 0.0
    report(6, ok, "doubled cutoff leaves the trajectory unchanged",
           f"sup gap {gap:.2e}, margin {study.cutoff_margin:.2f}")
    assert study.ok
    assert gap <= 1e-8
    assert study.cutoff_margin > 0.0


def test_criterion_07_data_stability_quotients():
    grid = build_grid(1, (1.0,), (100,), h=1.0)
    fam = truncate_family(
        builtin_material("reference-constant-kappa", SCEN), 4.0)
    spec = RunSpec(grid=grid, fam=fam, tau=2.5e-3, n_steps=100,
                   theta0=0.9, chi0=0.5, u0=0.0, theta_gamma=0.8,
                   p_outer=0.0)
    study = perturbation_experiment(spec, deltas=(1e-2, 1e-3, 1e-4))
    zero = perturbation_experiment(spec, deltas=(0.0,))
    ok = study.ratio_spread <= 10.0 and zero.rows[0].numerator == 0.0
    report(7, ok, "perturbation quotients flat, zero size exact",
           f"spread {study.ratio_spread:.4f}")
    assert study.ratio_spread <= 10.0
    assert zero.rows[0].numerator == 0.0


def test_criterion_08_self_convergence(halving_study):
    study = halving_study
    ok = (len(study.distances) == 3
          and all(r <= 0.67 for r in study.ratios))
    report(8, ok, "three step halvings decay at first order",
           "ratios " + ", ".join(f"{r:.3f}" for r in study.ratios))
    assert len(study.distances) == 3
    assert all(r <= 0.67 for r in study.ratios)


def test_criterion_09_jacobian_consistency():
    grid = build_grid(1, (1.0,), (40,), h=1.0)
    n = grid.n_cells
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        theta_prev = rng.uniform(0.5, 1.4, n)
        chi_prev = rng.uniform(0.0, 1.0, n)
        chi_new = np.clip(chi_prev + rng.uniform(-0.05, 0.05, n), 0.0, 1.0)
        src = rng.uniform(-1.0, 1.0, n)
        sys_ = ThetaSystem(FAM_DEFAULT, grid, 1e-3, theta_prev, chi_prev,
                           chi_new, src, 0.8, 100.0)
        theta = rng.uniform(0.3, 3.0, n)
        d = rng.uniform(-1.0, 1.0, n)
        eps = 1e-7
        fd = (sys_.residual(theta + eps * d)
              - sys_.residual(theta - eps * d)) / (2.0 * eps)
        jd = sys_.jacobian_diag(theta) * d + sys_._apply_stiffness(d)
        worst = max(worst, float(np.abs(jd - fd).max())
                    / max(1.0, float(np.abs(fd).max())))
    ok = worst < 1e-6
    report(9, ok, "temperature Jacobian matches finite differences",
           f"worst relative gap {worst:.2e}")
    assert worst < 1e-6


def test_criterion_10_entropy_structure(freeze, halving_study):
    _, res, _ = freeze
    min_integrand = min(r.min_integrand for r in res.entropy)
    agg = halving_study.entropy_aggregates
    decreasing = all(agg[j + 1] < agg[j] for j in range(len(agg) - 1))
    ok = min_integrand >= 0.0 and decreasing
    report(10, ok, "dissipation nonnegative, residual shrinks with tau",
           f"min integrand {min_integrand:.2e}, aggregates "
           + " > ".join(f"{a:.3e}" for a in agg))
    assert min_integrand >= 0.0
    assert decreasing
