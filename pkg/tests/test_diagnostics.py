"""Diagnostics tests: temperature floor, energy ledger, entropy balance,
complementarity recheck, trajectory monitors, and the study drivers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icebox.diagnostics import (bounds_monitor, complementarity_series,
                                energy_ledger_check, entropy_aggregate,
                                entropy_series, entropy_step,
                                extended_energy_monitor,
                                lower_bound_sequence, perturbation_experiment,
                                stored_energy, tau_convergence_study,
                                theta_floor_limit)
from icebox.grid import build_grid, integrate_field
from icebox.materials import (Constants, PiecewisePoly, builtin_material,
                              make_material, truncate_family)
from icebox.stepper import RunSpec, run

REF = builtin_material("reference")
FAM = truncate_family(REF, 4.0)
SCEN = Constants(g=0.1, zeta_Gamma=0.5, K_Gamma=0.5, theta_star=0.5)
FAM_SCEN = truncate_family(builtin_material("reference", SCEN), 4.0)
FAM_CONST_K = truncate_family(
    builtin_material("reference-constant-kappa", SCEN), 4.0)


@pytest.fixture(scope="module")
def freeze_run():
    grid = build_grid(1, (1.0,), (50,), h=1.0)
    spec = RunSpec(grid=grid, fam=FAM_SCEN, tau=1e-3, n_steps=200,
                   theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=0.5)
    return run(spec)


class TestLowerBoundSequence:
    @given(c_r=st.floats(0.0, 5.0), tau=st.floats(1e-4, 0.05),
           v0=st.floats(0.1, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_matches_closed_form(self, c_r, tau, v0):
        # linear caloric density below 1 gives an exact geometric decay
        seq = lower_bound_sequence(FAM, c_r, tau, 12, v0=v0)
        k = np.arange(13)
        expect = v0 * (1.0 + 2.0 * c_r * tau) ** (-k / 2.0)
        assert np.max(np.abs(seq - expect)) <= 1e-10
        assert np.all(np.diff(seq) <= 0.0)
        assert seq.min() > 0.0

    def test_capacity_scale_enters_decay(self):
        seq = lower_bound_sequence(FAM, 1.0, 1e-2, 10, v0=0.5, c_star=2.0)
        expect = 0.5 * (1.0 + 1e-2) ** (-np.arange(11) / 2.0)
        assert np.max(np.abs(seq - expect)) <= 1e-10

    def test_zero_weight_is_constant(self):
        seq = lower_bound_sequence(FAM, 0.0, 1e-3, 5, v0=0.7)
        assert np.all(seq == 0.7)

    def test_default_start_is_data_bound(self):
        seq = lower_bound_sequence(FAM_SCEN, 1.0, 1e-3, 3)
        assert seq[0] == SCEN.theta_star

    def test_error_vs_limit_halves_with_step(self):
        # vanishing-step limit is exponential decay; first order in tau
        limit = 0.5 * math.exp(-0.5)
        errs = []
        for tau in (1e-2, 5e-3, 2.5e-3):
            n = round(0.5 / tau)
            seq = lower_bound_sequence(FAM, 1.0, tau, n, v0=0.5)
            errs.append(abs(seq[-1] - limit))
        assert 0.4 <= errs[1] / errs[0] <= 0.6
        assert 0.4 <= errs[2] / errs[1] <= 0.6

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            lower_bound_sequence(FAM, 1.0, 0.0, 5)
        with pytest.raises(ValueError):
            lower_bound_sequence(FAM, -1.0, 1e-3, 5)
        with pytest.raises(ValueError):
            lower_bound_sequence(FAM, 1.0, 1e-3, 5, v0=-0.1)


class TestThetaFloorLimit:
    def test_exponential_closed_form(self):
        got = theta_floor_limit(FAM, 1.0, 0.5, v0=0.5)
        assert abs(got - 0.5 * math.exp(-0.5)) <= 1e-12

    def test_floor_sequence_converges_to_limit(self):
        limit = theta_floor_limit(FAM, 2.0, 0.25, v0=0.8)
        seq = lower_bound_sequence(FAM, 2.0, 0.25 / 4096, 4096, v0=0.8)
        assert abs(seq[-1] - limit) <= 1e-4

    def test_trivial_cases(self):
        assert theta_floor_limit(FAM, 0.0, 3.0, v0=0.6) == 0.6
        assert theta_floor_limit(FAM, 5.0, 0.0, v0=0.6) == 0.6

    def test_quadratic_caloric_density(self):
        # c1(s) = s^2 makes the floor integrand constant: the limit is
        # v0 - c_R t / c_star while positive, and nothing below that
        c1 = PiecewisePoly([0.0], [[0.0, 0.0, 1.0]])
        model = make_material("quadratic-caloric", c=1.0, c1=c1, lam=2.0,
                              kappa=1.0, gamma=1.0)
        famq = truncate_family(model, 4.0)
        got = theta_floor_limit(famq, 1.0, 0.1, v0=0.5)
        assert abs(got - 0.4) <= 1e-10
        with pytest.raises(ValueError, match="bounded"):
            theta_floor_limit(famq, 1.0, 1.0, v0=0.5)


class TestEnergyLedger:
    def test_stored_energy_hand_value(self):
        # uniform liquid at the transition temperature, two cells
        grid = build_grid(1, (1.0,), (2,), h=1.0)
        theta = np.ones(2)
        chi = np.ones(2)
        u = np.zeros(2)
        got = stored_energy(FAM_SCEN, grid, theta, chi, u,
                            v_state=0.2, c_R=2.0, tau=1e-3)
        # c(1) (e1(1) - f1(1)) + 2 chi + c_R tau = 2 + 2 + 0.002, then
        # K v^2 / 2 + g zeta v = 0.01 + 0.01
        assert abs(got - 4.022) <= 1e-14

    def test_recheck_matches_run_ledger(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rows = energy_ledger_check(spec.fam, spec.grid, spec.tau, res.thetas,
                                   res.chis, res.us, res.v_states,
                                   res.p_values, res.theta_gammas, res.c_R)
        assert len(rows) == len(res.ledger)
        for a, b in zip(rows, res.ledger):
            assert a.lhs == b.lhs
            assert a.rhs == b.rhs
            assert a.ok and b.ok

    def test_ledger_defect_nonpositive(self, freeze_run):
        for row in freeze_run.ledger:
            assert row.defect <= 1e-9 * max(1.0, abs(row.rhs))

    def test_detects_mutated_state(self, freeze_run):
        res = freeze_run
        spec = res.spec
        bad = res.thetas.copy()
        bad[-1] = bad[-1] * 1.1
        rows = energy_ledger_check(spec.fam, spec.grid, spec.tau, bad,
                                   res.chis, res.us, res.v_states,
                                   res.p_values, res.theta_gammas, res.c_R)
        assert not rows[-1].ok
        assert rows[-1].defect > 1e-3

    def test_rigid_container_variant(self):
        # K = 0 and g = 0 remove the container terms from the ledger
        grid = build_grid(1, (1.0,), (20,), h=1.0)
        spec = RunSpec(grid=grid, fam=FAM, tau=1e-3, n_steps=50,
                       theta0=1.2, chi0=1.0, u0=0.0, theta_gamma=0.9)
        res = run(spec)
        assert all(r.ok for r in res.ledger)
        direct = stored_energy(FAM, grid, res.thetas[0], res.chis[0],
                               res.us[0], 123.0, res.c_R, spec.tau)
        moved = stored_energy(FAM, grid, res.thetas[0], res.chis[0],
                              res.us[0], -7.0, res.c_R, spec.tau)
        assert direct == moved


class TestEntropy:
    def test_stationary_balance_is_exact(self):
        grid = build_grid(1, (1.0,), (6,), h=1.0)
        n = grid.n_cells
        levels = 5
        thetas = np.ones((levels + 1, n))
        chis = np.ones((levels + 1, n))
        us = np.zeros((levels + 1, n))
        tgs = np.ones((levels + 1, grid.n_boundary))
        rows = entropy_series(FAM, grid, 1e-3, thetas, chis, us, tgs)
        assert len(rows) == levels
        for r in rows:
            assert r.production == 0.0
            assert r.flux == 0.0
            assert r.residual == 0.0
            assert r.min_integrand == 0.0
        assert entropy_aggregate(rows, 1e-3) == 0.0

    def test_recomputed_series_matches_run(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rows = entropy_series(spec.fam, spec.grid, spec.tau, res.thetas,
                              res.chis, res.us, res.theta_gammas)
        assert len(rows) == len(res.entropy)
        for a, b in zip(rows, res.entropy):
            assert a.total == b.total
            assert a.residual == b.residual

    def test_dissipation_terms_nonnegative(self, freeze_run):
        rows = freeze_run.entropy
        assert min(r.min_integrand for r in rows) >= 0.0
        assert all(r.production >= 0.0 for r in rows)
        # cooling boundary keeps pulling entropy out
        assert all(r.flux <= 0.0 for r in rows)

    def test_requires_positive_temperature(self):
        grid = build_grid(1, (1.0,), (4,), h=1.0)
        theta = np.array([0.5, 0.0, 0.5, 0.5])
        with pytest.raises(ValueError, match="positive"):
            entropy_step(FAM, grid, 1e-3, np.full(4, 0.5), np.ones(4),
                         np.zeros(4), theta, np.ones(4), np.zeros(4), 0.5)


class TestComplementarity:
    def test_recheck_on_valid_run(self, freeze_run):
        res = freeze_run
        spec = res.spec
        vol, phase = complementarity_series(spec.fam, spec.grid, spec.tau,
                                            res.thetas, res.chis, res.us,
                                            res.v_states)
        assert vol.max() <= 1e-9
        assert phase.max() <= 1e-10

    def test_detects_tampered_phase(self, freeze_run):
        res = freeze_run
        spec = res.spec
        bad = res.chis.copy()
        bad[-1, 10] = 0.5 * bad[-1, 10] + 0.25
        _, phase = complementarity_series(spec.fam, spec.grid, spec.tau,
                                          res.thetas, bad, res.us,
                                          res.v_states)
        assert phase.max() > 1e-2


class TestBoundsMonitor:
    def test_survey_fields(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rep = bounds_monitor(spec.fam, spec.grid, spec.tau, res.thetas,
                             res.chis, res.us, floor=res.floor,
                             floor_checked=res.floor_checked)
        assert rep.theta_min >= 0.5 - 1e-12
        # latent heat release can nudge cells slightly past the start value
        assert rep.theta_max <= 1.01
        assert 0.0 <= rep.chi_min <= rep.chi_max <= 1.0
        assert rep.cutoff == spec.fam.B
        assert rep.cutoff_margin > 0.0
        assert rep.floor_ok is True
        assert rep.floor_worst >= 0.0
        text = rep.to_text()
        assert "theta range" in text
        assert "pass" in text and "FAIL" not in text

    def test_without_floor(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rep = bounds_monitor(spec.fam, spec.grid, spec.tau, res.thetas,
                             res.chis, res.us)
        assert rep.floor_ok is None
        assert "not run" in rep.to_text()


class TestExtendedEnergy:
    def test_identity_and_default_reference(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rep = extended_energy_monitor(spec.fam, spec.grid, spec.tau,
                                      res.thetas, res.chis, res.us,
                                      res.theta_gammas)
        assert rep.theta_bar == 0.5
        assert rep.identity_defect <= 1e-12
        assert rep.sup_value >= rep.values[0]
        assert np.all(rep.dissipation_cum[1:] >= rep.dissipation_cum[:-1])
        assert np.all(rep.boundary_cum[1:] >= rep.boundary_cum[:-1])

    def test_reference_override_and_validation(self, freeze_run):
        res = freeze_run
        spec = res.spec
        rep = extended_energy_monitor(spec.fam, spec.grid, spec.tau,
                                      res.thetas, res.chis, res.us,
                                      res.theta_gammas, theta_bar=1.0)
        assert rep.theta_bar == 1.0
        with pytest.raises(ValueError, match="positive"):
            extended_energy_monitor(spec.fam, spec.grid, spec.tau,
                                    res.thetas, res.chis, res.us,
                                    res.theta_gammas, theta_bar=-1.0)

    def test_saturates_on_long_horizons(self):
        # run to full solidification: the monitor stops accumulating
        grid = build_grid(1, (1.0,), (20,), h=1.0)
        spec = RunSpec(grid=grid, fam=FAM_SCEN, tau=1e-2, n_steps=1200,
                       theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=0.5)
        res = run(spec)
        rep = extended_energy_monitor(FAM_SCEN, grid, spec.tau, res.thetas,
                                      res.chis, res.us, res.theta_gammas)
        v = rep.values
        q = len(v) // 4
        first = v[q - 1] - v[0]
        last = abs(v[-1] - v[-q])
        assert last <= 0.05 * first
        assert rep.sup_value <= 2.0


class TestPerturbation:
    def small_spec(self, **kw):
        grid = build_grid(1, (1.0,), (40,), h=kw.pop("h", 1.0))
        args = dict(grid=grid, fam=FAM_CONST_K, tau=2.5e-3, n_steps=40,
                    theta0=0.9, chi0=0.5, u0=0.0, theta_gamma=0.8)
        args.update(kw)
        return RunSpec(**args)

    def test_quotient_flat_in_size(self):
        rep = perturbation_experiment(self.small_spec(),
                                      deltas=(1e-2, 1e-3, 1e-4))
        assert len(rep.rows) == 3
        assert all(math.isfinite(r.ratio) and r.ratio > 0.0 for r in rep.rows)
        assert rep.ratio_spread <= 10.0
        text = rep.to_text()
        assert "quotient" in text

    def test_numerator_scales_quadratically(self):
        rep = perturbation_experiment(self.small_spec(), deltas=(1e-2, 1e-3))
        r_big, r_small = rep.rows
        assert math.isclose(r_big.denominator, 100.0 * r_small.denominator,
                            rel_tol=1e-9)
        assert 90.0 <= r_big.numerator / r_small.numerator <= 110.0

    def test_zero_size_reproduces_base_run(self):
        rep = perturbation_experiment(self.small_spec(), deltas=(0.0,))
        row = rep.rows[0]
        assert row.numerator == 0.0
        assert row.denominator == 0.0
        assert math.isnan(row.ratio)

    def test_initial_field_denominator_is_exact(self):
        rep = perturbation_experiment(self.small_spec(), deltas=(1e-3,),
                                      fields=("theta0",))
        assert math.isclose(rep.rows[0].denominator, 1e-6, rel_tol=1e-9)

    def test_refuses_phase_dependent_conductivity(self):
        grid = build_grid(1, (1.0,), (10,), h=1.0)
        spec = RunSpec(grid=grid, fam=FAM_SCEN, tau=1e-3, n_steps=5,
                       theta0=0.9, chi0=0.5, u0=0.0, theta_gamma=0.8)
        with pytest.raises(ValueError, match="conductivity"):
            perturbation_experiment(spec)

    def test_insulated_boundary_data_is_inert(self):
        rep = perturbation_experiment(self.small_spec(h=0.0),
                                      deltas=(1e-2,),
                                      fields=("theta_gamma",))
        row = rep.rows[0]
        assert row.numerator == 0.0
        assert row.denominator == 0.0


class TestTauStudy:
    def test_first_order_decay(self):
        grid = build_grid(1, (1.0,), (50,), h=1.0)
        spec = RunSpec(grid=grid, fam=FAM_SCEN, tau=4e-3, n_steps=100,
                       theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=0.5)
        rep = tau_convergence_study(spec, levels=2)
        assert rep.taus == (4e-3, 2e-3, 1e-3)
        assert len(rep.distances) == 2
        assert len(rep.ratios) == 1
        assert rep.ok
        assert rep.ratios[0] <= 0.67
        assert rep.entropy_decreasing
        text = rep.to_text()
        assert "pass" in text and "FAIL" not in text

    def test_rejects_zero_levels(self):
        grid = build_grid(1, (1.0,), (10,), h=1.0)
        spec = RunSpec(grid=grid, fam=FAM_SCEN, tau=1e-3, n_steps=5,
                       theta0=1.0, chi0=1.0, u0=0.0, theta_gamma=0.5)
        with pytest.raises(ValueError):
            tau_convergence_study(spec, levels=0)
