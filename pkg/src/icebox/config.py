"""Run configuration: a JSON-compatible schema, eager validation, and
construction of ready-to-run specifications.

Every validation failure carries the dotted path of the offending key,
so a bad file is diagnosed in one read.  Parsing is eager: the grid and
material are built and the initial and boundary data are checked
against the admissible window immediately, not at step time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .grid import Grid, build_grid
from .materials import (Constants, TruncationFamily, builtin_material,
                        truncate_family)
from .stepper import RunChecks, RunSpec

__all__ = [
    "ConfigError",
    "TimeTable",
    "SimConfig",
    "parse_config",
    "parse_config_data",
    "serialize_config",
    "build_runspec",
]

DEFAULT_TRUNCATION = 4.0
DEFAULT_SNAPSHOTS = 10
DEFAULT_SEED = 20260814
DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4)
PERTURB_FIELDS = ("theta0", "chi0", "u0", "p_outer", "theta_gamma")


class ConfigError(ValueError):
    """Schema or constraint violation with a path-qualified message."""


def _fail(path, message):
    raise ConfigError(f"{path}: {message}")


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        _fail(path, "must be an object")
    for key in obj:
        if key not in allowed:
            _fail(f"{path}.{key}", "unknown key")


def _get_number(obj, key, path, default=None):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "required")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(f"{path}.{key}", "must be a number")
    return float(val)


def _get_int(obj, key, path, default=None):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "required")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        _fail(f"{path}.{key}", "must be an integer")
    return int(val)


def _get_bool(obj, key, path, default):
    val = obj.get(key, default)
    if not isinstance(val, bool):
        _fail(f"{path}.{key}", "must be true or false")
    return val


def _get_str(obj, key, path, default=None):
    if key not in obj:
        if default is None:
            _fail(f"{path}.{key}", "required")
        return default
    val = obj[key]
    if not isinstance(val, str):
        _fail(f"{path}.{key}", "must be a string")
    return val


@dataclass(frozen=True)
class TimeTable:
    """Piecewise-linear time series, scalar or one column per node."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=float))
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("table needs at least two time points")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("table times must be strictly increasing")
        if self.values.shape[0] != self.times.size:
            raise ValueError("table needs one value row per time point")

    def sample(self, t):
        t = float(t)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), self.times.size - 2)
        t0, t1 = self.times[i], self.times[i + 1]
        w = (t - t0) / (t1 - t0)
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def __call__(self, t):
        return self.sample(t)

    def covers(self, horizon) -> bool:
        return self.times[0] <= 0.0 and self.times[-1] >= horizon - 1e-12

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True)
class SimConfig:
    """Validated run configuration with all pieces resolved."""

    grid: Grid
    fam: TruncationFamily
    material_name: str
    truncation: float
    constants: Constants
    tau: float
    horizon: float
    n_steps: int
    theta0: np.ndarray
    chi0: np.ndarray
    u0: np.ndarray
    theta_gamma: Union[float, TimeTable]
    pressure: Union[float, TimeTable]
    stabilization: Optional[float]
    coupling: str
    output_dir: str
    snapshots: int
    plots: bool
    checks: RunChecks
    seed: int
    deltas: tuple
    tau_levels: int
    truncation_factor: float
    perturb_fields: tuple


def _parse_grid(data):
    if "grid" not in data:
        _fail("grid", "required")
    g = data["grid"]
    _check_keys(g, {"dimension", "extent", "cells", "boundary_exchange"},
                "grid")
    dim = _get_int(g, "dimension", "grid", 1)
    if dim not in (1, 2):
        _fail("grid.dimension", "must be 1 or 2")
    for key in ("extent", "cells"):
        if key not in g:
            _fail(f"grid.{key}", "required")
        if not isinstance(g[key], (list, tuple)) or len(g[key]) != dim:
            _fail(f"grid.{key}", f"must be a list of {dim} entries")
    extent = []
    for i, e in enumerate(g["extent"]):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or e <= 0:
            _fail(f"grid.extent[{i}]", "must be a positive number")
        extent.append(float(e))
    cells = []
    for i, c in enumerate(g["cells"]):
        if isinstance(c, bool) or not isinstance(c, int) or c < 1:
            _fail(f"grid.cells[{i}]", "must be a positive integer")
        cells.append(c)
    h = _get_number(g, "boundary_exchange", "grid", 1.0)
    if h < 0.0:
        _fail("grid.boundary_exchange", "must be nonnegative")
    return build_grid(dim, tuple(extent), tuple(cells), h=h)


def _parse_constants(data):
    block = data.get("constants", {})
    _check_keys(block, {"g", "zeta_gamma", "k_gamma", "theta_star",
                        "theta_sup"}, "constants")
    base = Constants()
    try:
        cst = Constants(
            g=_get_number(block, "g", "constants", base.g),
            zeta_Gamma=_get_number(block, "zeta_gamma", "constants",
                                   base.zeta_Gamma),
            K_Gamma=_get_number(block, "k_gamma", "constants", base.K_Gamma),
            theta_star=_get_number(block, "theta_star", "constants",
                                   base.theta_star),
            theta_sup=_get_number(block, "theta_sup", "constants",
                                  base.theta_sup))
    except ValueError as exc:
        _fail("constants", str(exc))
    return cst


def _parse_material(data, constants):
    block = data.get("material", {})
    _check_keys(block, {"name", "truncation"}, "material")
    name = _get_str(block, "name", "material", "reference")
    trunc = _get_number(block, "truncation", "material", DEFAULT_TRUNCATION)
    if trunc <= 0.0:
        _fail("material.truncation", "must be positive")
    try:
        model = builtin_material(name, constants)
    except ValueError as exc:
        _fail("material.name", str(exc))
    fam = truncate_family(model, trunc)
    if fam.B <= constants.theta_sup:
        _fail("material.truncation",
              f"cutoff {fam.B:.6g} must exceed the upper data bound "
              f"{constants.theta_sup:g}; raise the truncation level")
    return name, trunc, fam


def _parse_time(data):
    if "time" not in data:
        _fail("time", "required")
    block = data["time"]
    _check_keys(block, {"tau", "horizon"}, "time")
    tau = _get_number(block, "tau", "time")
    horizon = _get_number(block, "horizon", "time")
    if tau <= 0.0:
        _fail("time.tau", "must be positive")
    if horizon < tau:
        _fail("time.horizon", "must be at least one step")
    steps = horizon / tau
    n = round(steps)
    if abs(steps - n) > 1e-9 * max(1.0, steps):
        _fail("time.horizon", "must be an integer multiple of tau")
    return tau, horizon, int(n)


def _resolve_field(value, grid, path, base_dir):
    n = grid.n_cells
    if isinstance(value, bool):
        _fail(path, "must be a number, list, ramp, or file")
    if isinstance(value, (int, float)):
        return np.full(n, float(value))
    if isinstance(value, list):
        arr = np.asarray(value, dtype=float)
        if arr.shape != (n,):
            _fail(path, f"list must hold one value per cell ({n})")
        return arr
    if isinstance(value, dict):
        if set(value) == {"ramp"}:
            ramp = value["ramp"]
            if (not isinstance(ramp, (list, tuple)) or len(ramp) != 2
                    or any(isinstance(v, bool) or
                           not isinstance(v, (int, float)) for v in ramp)):
                _fail(f"{path}.ramp", "must be a [start, end] number pair")
            x = grid.centers[:, 0]
            lo, hi = float(x.min()), float(x.max())
            span = hi - lo if hi > lo else 1.0
            frac = (x - lo) / span
            return float(ramp[0]) + (float(ramp[1]) - float(ramp[0])) * frac
        if set(value) == {"file"}:
            rel = value["file"]
            if not isinstance(rel, str):
                _fail(f"{path}.file", "must be a path string")
            full = os.path.join(base_dir, rel)
            try:
                arr = np.loadtxt(full, ndmin=1, dtype=float)
            except OSError as exc:
                _fail(f"{path}.file", f"cannot read: {exc}")
            if arr.shape != (n,):
                _fail(f"{path}.file",
                      f"must hold one value per cell ({n}), got {arr.shape}")
            return arr
    _fail(path, "must be a number, list, ramp, or file")


def _parse_initial(data, grid, constants, base_dir):
    if "initial" not in data:
        _fail("initial", "required")
    block = data["initial"]
    _check_keys(block, {"theta", "chi", "u"}, "initial")
    if "theta" not in block:
        _fail("initial.theta", "required")
    if "chi" not in block:
        _fail("initial.chi", "required")
    theta0 = _resolve_field(block["theta"], grid, "initial.theta", base_dir)
    chi0 = _resolve_field(block["chi"], grid, "initial.chi", base_dir)
    u0 = _resolve_field(block.get("u", 0.0), grid, "initial.u", base_dir)
    lo, hi = constants.theta_star, constants.theta_sup
    if theta0.min() < lo or theta0.max() > hi:
        _fail("initial.theta",
              f"values must lie in [theta_star, theta_sup] = [{lo:g}, {hi:g}]")
    if chi0.min() < 0.0 or chi0.max() > 1.0:
        _fail("initial.chi", "values must lie in [0, 1]")
    return theta0, chi0, u0


def _parse_table(value, path, horizon, n_nodes=None):
    """Scalar or piecewise-linear table; per-node rows need n_nodes."""
    if isinstance(value, bool):
        _fail(path, "must be a number or a {times, values} table")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, dict):
        _check_keys(value, {"times", "values"}, path)
        if "times" not in value or "values" not in value:
            _fail(path, "table needs both times and values")
        try:
            table = TimeTable(value["times"], value["values"])
        except (ValueError, TypeError) as exc:
            _fail(path, str(exc))
        if table.values.ndim == 2:
            if n_nodes is None:
                _fail(path, "per-node rows are not allowed here")
            if table.values.shape[1] != n_nodes:
                _fail(path, f"each value row needs one entry per boundary "
                            f"node ({n_nodes})")
        elif table.values.ndim != 1:
            _fail(path, "values must be a list of rows or numbers")
        if not table.covers(horizon):
            _fail(path, "table must cover [0, horizon]")
        return table
    _fail(path, "must be a number or a {times, values} table")


def _parse_boundary(data, grid, constants, horizon):
    if "boundary" not in data:
        _fail("boundary", "required")
    block = data["boundary"]
    _check_keys(block, {"theta_gamma"}, "boundary")
    if "theta_gamma" not in block:
        _fail("boundary.theta_gamma", "required")
    tg = _parse_table(block["theta_gamma"], "boundary.theta_gamma",
                      horizon, n_nodes=grid.n_boundary)
    lo, hi = constants.theta_star, constants.theta_sup
    vals = np.asarray(tg.values if isinstance(tg, TimeTable) else tg)
    if vals.min() < lo or vals.max() > hi:
        _fail("boundary.theta_gamma",
              f"values must lie in [theta_star, theta_sup] = [{lo:g}, {hi:g}]")
    return tg


def _parse_checks(data):
    block = data.get("checks", {})
    _check_keys(block, {"complementarity", "comp_tol", "energy",
                        "energy_rtol", "floor", "entropy_sign"}, "checks")
    base = RunChecks()
    checks = RunChecks(
        complementarity=_get_bool(block, "complementarity", "checks",
                                  base.complementarity),
        comp_tol=_get_number(block, "comp_tol", "checks", base.comp_tol),
        energy=_get_bool(block, "energy", "checks", base.energy),
        energy_rtol=_get_number(block, "energy_rtol", "checks",
                                base.energy_rtol),
        floor=_get_bool(block, "floor", "checks", base.floor),
        entropy_sign=_get_bool(block, "entropy_sign", "checks",
                               base.entropy_sign))
    if checks.comp_tol <= 0.0:
        _fail("checks.comp_tol", "must be positive")
    if checks.energy_rtol <= 0.0:
        _fail("checks.energy_rtol", "must be positive")
    return checks


def _parse_study(data):
    block = data.get("study", {})
    _check_keys(block, {"seed", "deltas", "tau_levels", "truncation_factor",
                        "perturb_fields"}, "study")
    seed = _get_int(block, "seed", "study", DEFAULT_SEED)
    levels = _get_int(block, "tau_levels", "study", 3)
    if levels < 1:
        _fail("study.tau_levels", "must be at least 1")
    factor = _get_number(block, "truncation_factor", "study", 2.0)
    if factor <= 1.0:
        _fail("study.truncation_factor", "must exceed 1")
    deltas = block.get("deltas", list(DEFAULT_DELTAS))
    if not isinstance(deltas, list) or not deltas:
        _fail("study.deltas", "must be a non-empty list of numbers")
    for i, d in enumerate(deltas):
        if isinstance(d, bool) or not isinstance(d, (int, float)) or d < 0:
            _fail(f"study.deltas[{i}]", "must be a nonnegative number")
    fields = block.get("perturb_fields", list(PERTURB_FIELDS))
    if not isinstance(fields, list) or not fields:
        _fail("study.perturb_fields", "must be a non-empty list")
    for i, f in enumerate(fields):
        if f not in PERTURB_FIELDS:
            _fail(f"study.perturb_fields[{i}]",
                  f"must be one of {list(PERTURB_FIELDS)}")
    return seed, tuple(float(d) for d in deltas), levels, factor, tuple(fields)


def parse_config_data(data, base_dir=".") -> SimConfig:
    """Validate a configuration dictionary into a :class:`SimConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    _check_keys(data, {"grid", "material", "constants", "time", "initial",
                       "boundary", "pressure", "stabilization", "coupling",
                       "output", "checks", "study"}, "config")
    grid = _parse_grid(data)
    constants = _parse_constants(data)
    name, trunc, fam = _parse_material(data, constants)
    tau, horizon, n_steps = _parse_time(data)
    theta0, chi0, u0 = _parse_initial(data, grid, constants, base_dir)
    theta_gamma = _parse_boundary(data, grid, constants, horizon)
    pressure = _parse_table(data.get("pressure", 0.0), "pressure", horizon)

    stab = data.get("stabilization")
    if stab is not None:
        if isinstance(stab, bool) or not isinstance(stab, (int, float)):
            _fail("stabilization", "must be null or a number")
        stab = float(stab)
        if stab < 0.0:
            _fail("stabilization", "must be nonnegative")

    coupling = _get_str(data, "coupling", "config", "implicit")
    if coupling not in ("implicit", "explicit"):
        _fail("coupling", "must be 'implicit' or 'explicit'")

    out_block = data.get("output", {})
    _check_keys(out_block, {"directory", "snapshots", "plots"}, "output")
    out_dir = _get_str(out_block, "directory", "output", "run")
    snapshots = _get_int(out_block, "snapshots", "output", DEFAULT_SNAPSHOTS)
    if snapshots < 0:
        _fail("output.snapshots", "must be nonnegative")
    plots = _get_bool(out_block, "plots", "output", False)

    checks = _parse_checks(data)
    seed, deltas, tau_levels, trunc_factor, fields = _parse_study(data)
    return SimConfig(
        grid=grid, fam=fam, material_name=name, truncation=trunc,
        constants=constants, tau=tau, horizon=horizon, n_steps=n_steps,
        theta0=theta0, chi0=chi0, u0=u0, theta_gamma=theta_gamma,
        pressure=pressure, stabilization=stab, coupling=coupling,
        output_dir=out_dir, snapshots=snapshots, plots=plots, checks=checks,
        seed=seed, deltas=deltas, tau_levels=tau_levels,
        truncation_factor=trunc_factor, perturb_fields=fields)


def parse_config(path) -> SimConfig:
    """Read and validate a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}")
    return parse_config_data(data, base_dir=os.path.dirname(
        os.path.abspath(path)))


def serialize_config(config: SimConfig) -> dict:
    """Emit a self-contained dictionary that parses back equivalently.

    Field data loaded from files or expanded from ramps is written out
    as explicit per-cell lists, so the result does not depend on any
    external file.
    """
    grid = config.grid
    cst = config.constants

    def data_out(value):
        return value.to_dict() if isinstance(value, TimeTable) else value

    return {
        "grid": {
            "dimension": grid.dim,
            "extent": [float(e) for e in grid.extent],
            "cells": [int(c) for c in grid.shape],
            "boundary_exchange": float(grid.boundary_h[0])
            if grid.n_boundary else 0.0,
        },
        "material": {"name": config.material_name,
                     "truncation": config.truncation},
        "constants": {"g": cst.g, "zeta_gamma": cst.zeta_Gamma,
                      "k_gamma": cst.K_Gamma, "theta_star": cst.theta_star,
                      "theta_sup": cst.theta_sup},
        "time": {"tau": config.tau, "horizon": config.horizon},
        "initial": {"theta": config.theta0.tolist(),
                    "chi": config.chi0.tolist(),
                    "u": config.u0.tolist()},
        "boundary": {"theta_gamma": data_out(config.theta_gamma)},
        "pressure": data_out(config.pressure),
        "stabilization": config.stabilization,
        "coupling": config.coupling,
        "output": {"directory": config.output_dir,
                   "snapshots": config.snapshots,
                   "plots": config.plots},
        "checks": {"complementarity": config.checks.complementarity,
                   "comp_tol": config.checks.comp_tol,
                   "energy": config.checks.energy,
                   "energy_rtol": config.checks.energy_rtol,
                   "floor": config.checks.floor,
                   "entropy_sign": config.checks.entropy_sign},
        "study": {"seed": config.seed, "deltas": list(config.deltas),
                  "tau_levels": config.tau_levels,
                  "truncation_factor": config.truncation_factor,
                  "perturb_fields": list(config.perturb_fields)},
    }


def build_runspec(config: SimConfig) -> RunSpec:
    """Turn a validated configuration into a runnable specification."""
    tg = config.theta_gamma
    if isinstance(tg, TimeTable):
        tg = tg.sample
    p = config.pressure
    if isinstance(p, TimeTable):
        table = p

        def p(t, table=table):
            return float(table.sample(t))
    return RunSpec(grid=config.grid, fam=config.fam, tau=config.tau,
                   n_steps=config.n_steps, theta0=config.theta0,
                   chi0=config.chi0, u0=config.u0, theta_gamma=tg,
                   p_outer=p, c_R=config.stabilization,
                   coupling=config.coupling)
