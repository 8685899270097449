"""Configuration schema tests: validation, field resolution, tables,
round-trip serialization, and run-spec construction."""

import json

import numpy as np
import pytest

from icebox.config import (ConfigError, TimeTable, build_runspec,
                           parse_config, parse_config_data, serialize_config)
from icebox.materials import Constants
from icebox.stepper import run


def minimal(**overrides):
    data = {
        "grid": {"dimension": 1, "extent": [1.0], "cells": [20]},
        "time": {"tau": 1e-3, "horizon": 0.02},
        "initial": {"theta": 1.0, "chi": 1.0},
        "boundary": {"theta_gamma": 1.0},
    }
    data.update(overrides)
    return data


class TestParseMinimal:
    def test_defaults(self):
        cfg = parse_config_data(minimal())
        assert cfg.material_name == "reference"
        assert cfg.truncation == 4.0
        assert cfg.constants == Constants()
        assert cfg.n_steps == 20
        assert cfg.grid.n_cells == 20
        assert cfg.pressure == 0.0
        assert cfg.stabilization is None
        assert cfg.coupling == "implicit"
        assert cfg.snapshots == 10
        assert np.all(cfg.theta0 == 1.0)
        assert np.all(cfg.chi0 == 1.0)
        assert np.all(cfg.u0 == 0.0)

    def test_stationary_runs(self):
        cfg = parse_config_data(minimal())
        res = run(build_runspec(cfg))
        assert res.theta_min.min() == 1.0
        assert res.theta_max.max() == 1.0

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(minimal()))
        cfg = parse_config(path)
        assert cfg.n_steps == 20

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            parse_config(bad)


class TestValidation:
    def test_phase_out_of_range_names_constraint(self):
        data = minimal(initial={"theta": 1.0, "chi": 1.5})
        with pytest.raises(ConfigError, match=r"initial\.chi.*\[0, 1\]"):
            parse_config_data(data)

    def test_temperature_window(self):
        data = minimal(initial={"theta": 0.2, "chi": 1.0})
        with pytest.raises(ConfigError, match=r"initial\.theta.*theta_star"):
            parse_config_data(data)

    def test_table_must_cover_horizon(self):
        data = minimal(boundary={"theta_gamma": {
            "times": [0.0, 0.01], "values": [1.0, 0.9]}})
        with pytest.raises(ConfigError, match="cover"):
            parse_config_data(data)

    def test_boundary_window(self):
        data = minimal(boundary={"theta_gamma": {
            "times": [0.0, 0.02], "values": [1.0, 0.2]}})
        with pytest.raises(ConfigError, match=r"theta_gamma.*theta_star"):
            parse_config_data(data)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_data(minimal(typo=1))
        with pytest.raises(ConfigError, match=r"grid\.typo"):
            parse_config_data(minimal(grid={"dimension": 1, "extent": [1.0],
                                            "cells": [20], "typo": 1}))

    def test_time_constraints(self):
        with pytest.raises(ConfigError, match=r"time\.tau"):
            parse_config_data(minimal(time={"tau": 0.0, "horizon": 1.0}))
        with pytest.raises(ConfigError, match="at least one step"):
            parse_config_data(minimal(time={"tau": 1e-3, "horizon": 1e-4}))
        with pytest.raises(ConfigError, match="integer multiple"):
            parse_config_data(minimal(time={"tau": 1e-3, "horizon": 0.0205}))

    def test_grid_constraints(self):
        with pytest.raises(ConfigError, match=r"grid\.dimension"):
            parse_config_data(minimal(grid={"dimension": 3,
                                            "extent": [1.0, 1.0, 1.0],
                                            "cells": [4, 4, 4]}))
        with pytest.raises(ConfigError, match=r"grid\.cells"):
            parse_config_data(minimal(grid={"dimension": 2,
                                            "extent": [1.0, 1.0],
                                            "cells": [4]}))
        with pytest.raises(ConfigError, match=r"grid\.extent\[0\]"):
            parse_config_data(minimal(grid={"dimension": 1,
                                            "extent": [-1.0], "cells": [4]}))

    def test_material_constraints(self):
        data = minimal(material={"name": "nope"})
        with pytest.raises(ConfigError, match=r"material\.name"):
            parse_config_data(data)
        # a cutoff below the admissible data window is unusable
        data = minimal(material={"truncation": 1.5})
        with pytest.raises(ConfigError, match="cutoff"):
            parse_config_data(data)

    def test_constants_constraints(self):
        data = minimal(constants={"theta_star": 2.0})
        with pytest.raises(ConfigError, match="theta_star"):
            parse_config_data(data)
        data = minimal(constants={"k_gamma": -1.0})
        with pytest.raises(ConfigError, match="constants.*>= 0"):
            parse_config_data(data)

    def test_misc_constraints(self):
        with pytest.raises(ConfigError, match="stabilization"):
            parse_config_data(minimal(stabilization=-1.0))
        with pytest.raises(ConfigError, match="coupling"):
            parse_config_data(minimal(coupling="magic"))
        with pytest.raises(ConfigError, match=r"output\.snapshots"):
            parse_config_data(minimal(output={"snapshots": -1}))
        with pytest.raises(ConfigError, match=r"checks\.comp_tol"):
            parse_config_data(minimal(checks={"comp_tol": 0.0}))
        with pytest.raises(ConfigError, match=r"study\.deltas"):
            parse_config_data(minimal(study={"deltas": [-0.1]}))
        with pytest.raises(ConfigError, match=r"study\.perturb_fields"):
            parse_config_data(minimal(study={"perturb_fields": ["bogus"]}))
        with pytest.raises(ConfigError, match=r"study\.tau_levels"):
            parse_config_data(minimal(study={"tau_levels": 0}))


class TestFieldResolution:
    def test_ramp(self):
        data = minimal(initial={"theta": {"ramp": [0.6, 1.4]}, "chi": 1.0})
        cfg = parse_config_data(data)
        assert cfg.theta0[0] == 0.6
        assert cfg.theta0[-1] == 1.4
        assert np.all(np.diff(cfg.theta0) > 0.0)

    def test_ramp_window_checked(self):
        data = minimal(initial={"theta": {"ramp": [0.1, 1.4]}, "chi": 1.0})
        with pytest.raises(ConfigError, match=r"initial\.theta"):
            parse_config_data(data)

    def test_explicit_list(self):
        values = list(np.linspace(0.8, 1.2, 20))
        data = minimal(initial={"theta": values, "chi": 1.0})
        cfg = parse_config_data(data)
        assert np.allclose(cfg.theta0, values)
        with pytest.raises(ConfigError, match="one value per cell"):
            parse_config_data(minimal(initial={"theta": [1.0, 1.0],
                                               "chi": 1.0}))

    def test_file_field(self, tmp_path):
        field = np.linspace(0.9, 1.1, 20)
        np.savetxt(tmp_path / "theta.csv", field)
        data = minimal(initial={"theta": {"file": "theta.csv"}, "chi": 1.0})
        cfg = parse_config_data(data, base_dir=str(tmp_path))
        assert np.allclose(cfg.theta0, field)
        data = minimal(initial={"theta": {"file": "gone.csv"}, "chi": 1.0})
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config_data(data, base_dir=str(tmp_path))

    def test_bad_field_shape(self):
        data = minimal(initial={"theta": {"ramp": [1.0]}, "chi": 1.0})
        with pytest.raises(ConfigError, match="pair"):
            parse_config_data(data)
        data = minimal(initial={"theta": "warm", "chi": 1.0})
        with pytest.raises(ConfigError, match="number, list, ramp, or file"):
            parse_config_data(data)


class TestTimeTable:
    def test_interpolates(self):
        table = TimeTable([0.0, 1.0, 2.0], [0.0, 10.0, 0.0])
        assert table.sample(0.5) == 5.0
        assert table.sample(1.5) == 5.0
        # clamps outside the covered span
        assert table.sample(-1.0) == 0.0
        assert table.sample(3.0) == 0.0

    def test_per_node_rows(self):
        table = TimeTable([0.0, 1.0], [[1.0, 2.0], [3.0, 4.0]])
        got = table.sample(0.5)
        assert np.allclose(got, [2.0, 3.0])

    def test_validation(self):
        with pytest.raises(ValueError, match="two time points"):
            TimeTable([0.0], [1.0])
        with pytest.raises(ValueError, match="strictly increasing"):
            TimeTable([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValueError, match="one value row"):
            TimeTable([0.0, 1.0], [1.0, 2.0, 3.0])

    def test_per_node_boundary_table(self):
        data = minimal(boundary={"theta_gamma": {
            "times": [0.0, 0.02],
            "values": [[1.0, 0.9], [0.8, 0.7]]}})
        cfg = parse_config_data(data)
        res = run(build_runspec(cfg))
        assert res.theta_gammas.shape[1] == 2
        data = minimal(boundary={"theta_gamma": {
            "times": [0.0, 0.02],
            "values": [[1.0, 0.9, 0.8], [0.8, 0.7, 0.6]]}})
        with pytest.raises(ConfigError, match="boundary node"):
            parse_config_data(data)

    def test_pressure_scalar_rows_only(self):
        data = minimal(pressure={"times": [0.0, 0.02],
                                 "values": [[0.0, 0.0], [0.1, 0.1]]})
        with pytest.raises(ConfigError, match="not allowed"):
            parse_config_data(data)


class TestRoundTrip:
    def test_serialize_parse_is_semantically_idempotent(self, tmp_path):
        field = np.linspace(0.9, 1.1, 20)
        np.savetxt(tmp_path / "theta.csv", field)
        data = minimal(
            initial={"theta": {"file": "theta.csv"}, "chi": 0.5},
            boundary={"theta_gamma": {"times": [0.0, 0.02],
                                      "values": [1.0, 0.9]}},
            pressure={"times": [0.0, 0.02], "values": [0.0, 0.05]},
            constants={"g": 0.1, "zeta_gamma": 0.5, "k_gamma": 0.5,
                       "theta_star": 0.5})
        cfg = parse_config_data(data, base_dir=str(tmp_path))
        blob = json.dumps(serialize_config(cfg))
        cfg2 = parse_config_data(json.loads(blob))
        assert np.array_equal(cfg.theta0, cfg2.theta0)
        assert cfg.constants == cfg2.constants
        assert cfg.n_steps == cfg2.n_steps
        res1 = run(build_runspec(cfg))
        res2 = run(build_runspec(cfg2))
        assert np.array_equal(res1.thetas, res2.thetas)
        assert np.array_equal(res1.p_values, res2.p_values)

    def test_twice_serialized_is_identical(self):
        cfg = parse_config_data(minimal())
        first = serialize_config(cfg)
        again = serialize_config(parse_config_data(first))
        assert json.dumps(first, sort_keys=True) == \
            json.dumps(again, sort_keys=True)


class TestBuildRunspec:
    def test_tables_become_callables(self):
        data = minimal(
            boundary={"theta_gamma": {"times": [0.0, 0.02],
                                      "values": [1.0, 0.9]}},
            pressure={"times": [0.0, 0.02], "values": [0.0, 0.05]},
            constants={"g": 0.1, "zeta_gamma": 0.5, "k_gamma": 0.5,
                       "theta_star": 0.5})
        cfg = parse_config_data(data)
        spec = build_runspec(cfg)
        assert callable(spec.theta_gamma)
        assert callable(spec.p_outer)
        res = run(spec)
        # boundary data follows the table at each step end
        assert abs(res.theta_gammas[-1].max() - 0.9) <= 1e-12
        assert abs(res.p_values[-1] - 0.05) <= 1e-12

    def test_checks_forwarded(self):
        cfg = parse_config_data(minimal(checks={"comp_tol": 1e-8,
                                                "energy": False}))
        assert cfg.checks.comp_tol == 1e-8
        assert not cfg.checks.energy
