"""Run artifact persistence and offline re-verification.

Everything is text: CSV tables with ``#`` header lines, JSON for
metadata and summaries, SVG for plots.  Numbers are written with 17
significant digits so values round-trip exactly, and no file contains
a timestamp or machine-specific value: the same configuration produces
bitwise identical artifacts.

Snapshots carry both the state at the snapshot step and the state one
step earlier, plus the volume state the cells were loaded with, so the
cell-equation residuals and the entropy balance line of that step can
be re-derived offline without the full trajectory.  The per-step
ledgers are always complete; ``verify_run`` cross-checks their
arithmetic everywhere and re-derives everything else at the snapshot
steps.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .cellsolve import CellSolution, cell_residuals, prepare_cells
from .config import SimConfig, serialize_config
from .diagnostics import entropy_step, lower_bound_sequence, stored_energy
from .grid import Grid, build_grid, integrate_field
from .materials import Constants, builtin_material, truncate_family
from .stepper import RunResult

__all__ = [
    "FORMAT_VERSION",
    "material_hash",
    "snapshot_steps",
    "write_run",
    "read_run",
    "RunArtifacts",
    "Snapshot",
    "VerifyReport",
    "verify_run",
]

FORMAT_VERSION = 1

LEDGER_COLUMNS = ("step", "time", "lhs", "rhs", "defect", "stored",
                  "boundary_cum", "supply_cum", "ok")
ENTROPY_COLUMNS = ("step", "time", "total", "production", "flux",
                   "residual", "min_integrand")
SERIES_COLUMNS = ("step", "time", "theta_min", "theta_max", "chi_min",
                  "chi_max", "chi_mean", "load_mean", "v_state", "pressure",
                  "p_outer", "floor_value", "floor_checked", "comp_volume",
                  "comp_phase", "newton_iters", "cell_iters", "clamp_solid",
                  "clamp_liquid")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def material_hash(fam) -> str:
    """Stable digest of the material, its constants, and the cutoff."""
    payload = {
        "descriptor": fam.model.descriptor,
        "constants": asdict(fam.model.constants),
        "truncation": fam.R,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def snapshot_steps(n_steps, count) -> list:
    """First and last step plus ``count`` roughly equispaced interior ones."""
    marks = {0, int(n_steps)}
    for i in range(1, count + 1):
        marks.add(round(i * n_steps / (count + 1)))
    return sorted(marks)


def _write_csv(path, headers, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in headers:
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path):
    headers = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        key, _, value = body.partition(":")
        headers[key.strip()] = value.strip()
        i += 1
    if i >= len(lines):
        raise ValueError(f"{path}: missing column row")
    columns = lines[i].split(",")
    data = [line.split(",") for line in lines[i + 1:] if line]
    table = {name: np.array([float(row[j]) for row in data])
             for j, name in enumerate(columns)}
    return headers, table


def _json_dump(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _grid_header(grid: Grid):
    h = float(grid.boundary_h[0]) if grid.n_boundary else 0.0
    return [
        ("dimension", grid.dim),
        ("cells", ",".join(str(c) for c in grid.shape)),
        ("extent", ",".join(_fmt(e) for e in grid.extent)),
        ("boundary_exchange", _fmt(h)),
    ]


def _meta_payload(result: RunResult, config, mat_hash, snap_steps):
    spec = result.spec
    grid = spec.grid
    h = float(grid.boundary_h[0]) if grid.n_boundary else 0.0
    meta = {
        "format": FORMAT_VERSION,
        "material": {
            "name": spec.fam.model.name,
            "truncation": spec.fam.R,
            "cutoff": spec.fam.B,
            "hash": mat_hash,
        },
        "constants": {
            "g": spec.fam.model.constants.g,
            "zeta_gamma": spec.fam.model.constants.zeta_Gamma,
            "k_gamma": spec.fam.model.constants.K_Gamma,
            "theta_star": spec.fam.model.constants.theta_star,
            "theta_sup": spec.fam.model.constants.theta_sup,
        },
        "grid": {
            "dimension": grid.dim,
            "cells": list(grid.shape),
            "extent": [float(e) for e in grid.extent],
            "boundary_exchange": h,
        },
        "time": {"tau": spec.tau, "n_steps": spec.n_steps},
        "coupling": spec.coupling,
        "c_R": result.c_R,
        "stored_energy_initial": (result.ledger[0].rhs
                                  - result.ledger[0].supply_cum)
        if result.ledger else None,
        "snapshot_steps": snap_steps,
        "checks": {
            "comp_tol": 1e-10,
            "energy_rtol": 1e-9,
        },
    }
    if config is not None:
        meta["config"] = serialize_config(config)
        meta["checks"]["comp_tol"] = config.checks.comp_tol
        meta["checks"]["energy_rtol"] = config.checks.energy_rtol
    return meta


def _write_snapshot(path, result: RunResult, k, mat_hash):
    spec = result.spec
    grid = spec.grid
    tg = result.theta_gammas[k]
    headers = [
        ("format", FORMAT_VERSION),
        ("step", k),
        ("time", _fmt(result.times[k])),
        ("tau", _fmt(spec.tau)),
        ("truncation", _fmt(spec.fam.R)),
        ("cutoff", _fmt(spec.fam.B)),
        ("material", spec.fam.model.name),
        ("material_hash", mat_hash),
        ("c_R", _fmt(result.c_R)),
        ("v_state", _fmt(result.v_states[k])),
        ("theta_gamma", ",".join(_fmt(v) for v in np.atleast_1d(tg))),
    ] + _grid_header(grid)
    prev = max(k - 1, 0)
    coords = [f"c{i}" for i in range(grid.dim)]
    columns = ["index"] + coords + ["theta", "chi", "u", "theta_prev",
                                    "chi_prev", "u_prev"]
    rows = []
    for i in range(grid.n_cells):
        rows.append([i] + [grid.centers[i, d] for d in range(grid.dim)]
                    + [result.thetas[k][i], result.chis[k][i],
                       result.us[k][i], result.thetas[prev][i],
                       result.chis[prev][i], result.us[prev][i]])
    _write_csv(path, headers, columns, rows)


def _series_rows(result: RunResult):
    grid = result.spec.grid
    vol = grid.total_volume
    for k in range(result.times.size):
        chi_mean = integrate_field(grid, result.chis[k]) / vol
        yield (k, result.times[k], result.theta_min[k], result.theta_max[k],
               result.chi_min[k], result.chi_max[k], chi_mean,
               result.load_mean[k], result.v_states[k], result.pressure[k],
               result.p_values[k], result.floor[k],
               bool(result.floor_checked[k]), result.comp_volume[k],
               result.comp_phase[k], int(result.newton_iters[k]),
               int(result.cell_iters[k]), int(result.clamp_solid[k]),
               int(result.clamp_liquid[k]))


def _summary_payload(result: RunResult) -> dict:
    comp_vol = float(result.comp_volume.max())
    comp_phase = float(result.comp_phase.max())
    energy_ok = all(r.ok for r in result.ledger)
    worst_defect = max((r.defect for r in result.ledger), default=-math.inf)
    margins = result.theta_min - result.floor
    checked = result.floor_checked
    floor_margin = float(margins[checked].min()) if checked.any() else math.inf
    ok = (comp_vol <= 1e-9 and comp_phase <= 1e-10 and energy_ok
          and floor_margin >= 0.0 and result.entropy_min_integrand >= 0.0)
    return {
        "format": FORMAT_VERSION,
        "ok": bool(ok),
        "steps": int(result.times.size - 1),
        "complementarity": {"max_volume": comp_vol,
                            "max_phase": comp_phase},
        "energy": {"all_rows_ok": bool(energy_ok),
                   "worst_defect": float(worst_defect),
                   "checked_during_run": bool(result.energy_checked)},
        "floor": {"worst_margin": floor_margin,
                  "guaranteed": bool(result.floor_guaranteed)},
        "entropy": {"aggregate_residual": result.entropy_total,
                    "min_integrand": result.entropy_min_integrand},
        "extremes": {"theta_min": float(result.theta_min.min()),
                     "theta_max": float(result.theta_max.max()),
                     "chi_min": float(result.chi_min.min()),
                     "chi_max": float(result.chi_max.max()),
                     "max_volume_rate": result.max_udot,
                     "max_phase_rate": result.max_chidot},
        "stabilization": {"c_R": result.c_R,
                          "recommended": result.c_R_recommended,
                          "below_recommendation": bool(result.c_R_below)},
        "step_control": {"tau": result.spec.tau,
                         "tau_ceiling": result.tau_ceiling_value,
                         "tau_ok": bool(result.tau_ok)},
        "newton": {"max": int(result.newton_iters.max()),
                   "total": int(result.newton_iters.sum())},
        "cell_iterations": {"max": int(result.cell_iters.max()),
                            "total": int(result.cell_iters.sum())},
    }


def _write_plots(result: RunResult, plot_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "icebox"

    os.makedirs(plot_dir, exist_ok=True)
    t = result.times
    grid = result.spec.grid
    vol = grid.total_volume
    chi_mean = np.array([integrate_field(grid, result.chis[k]) / vol
                         for k in range(t.size)])

    def save(fig, name):
        fig.savefig(os.path.join(plot_dir, name), format="svg",
                    metadata={"Date": None})
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, result.theta_min, label="min")
    ax.plot(t, result.theta_max, label="max")
    if result.floor_checked.any():
        ax.plot(t, result.floor, "--", label="floor")
    ax.set_xlabel("time")
    ax.set_ylabel("temperature")
    ax.legend()
    save(fig, "temperature.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, chi_mean, label="liquid fraction")
    ax.plot(t, 1.0 - chi_mean, label="solid fraction")
    ax.plot(t, result.chi_min, ":", label="min")
    ax.plot(t, result.chi_max, ":", label="max")
    ax.set_xlabel("time")
    ax.set_ylabel("phase fraction")
    ax.legend()
    save(fig, "phase.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, result.load_mean, label="mean volume increment")
    ax.plot(t, result.pressure, label="container pressure")
    ax.set_xlabel("time")
    ax.legend()
    save(fig, "volume.svg")

    if result.ledger:
        fig, ax = plt.subplots(figsize=(6, 4))
        steps = [r.time for r in result.ledger]
        margin = [r.rhs - r.lhs for r in result.ledger]
        ax.plot(steps, margin, label="ledger margin")
        ax.axhline(0.0, color="k", linewidth=0.5)
        ax.set_xlabel("time")
        ax.set_ylabel("rhs - lhs")
        ax.legend()
        save(fig, "ledger.svg")


def write_run(result: RunResult, out_dir, config=None,
              snapshots=None, plots=None) -> dict:
    """Persist a run; returns the paths written, keyed by kind.

    ``config`` (a :class:`SimConfig`) is embedded in the metadata when
    given, making the run self-contained; snapshot count and plot
    emission default to its settings.
    """
    if result.thetas is None:
        raise ValueError("write_run needs a stored trajectory "
                         "(run with store=True)")
    if snapshots is None:
        snapshots = config.snapshots if config is not None else 10
    if plots is None:
        plots = config.plots if config is not None else False

    os.makedirs(out_dir, exist_ok=True)
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    mat_hash = material_hash(result.spec.fam)
    snaps = snapshot_steps(result.spec.n_steps, snapshots)

    paths = {"meta": os.path.join(out_dir, "meta.json"),
             "summary": os.path.join(out_dir, "summary.json"),
             "ledger": os.path.join(out_dir, "ledger.csv"),
             "entropy": os.path.join(out_dir, "entropy.csv"),
             "series": os.path.join(out_dir, "series.csv"),
             "snapshots": []}

    _json_dump(paths["meta"], _meta_payload(result, config, mat_hash, snaps))
    _json_dump(paths["summary"], _summary_payload(result))

    common = [("format", FORMAT_VERSION), ("material_hash", mat_hash),
              ("tau", _fmt(result.spec.tau)),
              ("truncation", _fmt(result.spec.fam.R))]
    _write_csv(paths["ledger"], common, LEDGER_COLUMNS,
               ((r.step, r.time, r.lhs, r.rhs, r.defect, r.stored,
                 r.boundary_cum, r.supply_cum, r.ok) for r in result.ledger))
    _write_csv(paths["entropy"], common, ENTROPY_COLUMNS,
               ((r.step, r.time, r.total, r.production, r.flux, r.residual,
                 r.min_integrand) for r in result.entropy))
    _write_csv(paths["series"], common, SERIES_COLUMNS, _series_rows(result))

    for k in snaps:
        path = os.path.join(snap_dir, f"snap_{k:06d}.csv")
        _write_snapshot(path, result, k, mat_hash)
        paths["snapshots"].append(path)

    if plots:
        _write_plots(result, os.path.join(out_dir, "plots"))
    return paths


# ---------------------------------------------------------------------------
# reading and verification


@dataclass
class Snapshot:
    step: int
    headers: dict
    fields: dict


@dataclass
class RunArtifacts:
    meta: dict
    ledger: dict
    entropy: dict
    series: dict
    snapshots: list
    ledger_headers: dict = field(default_factory=dict)


def read_run(run_dir) -> RunArtifacts:
    """Load all artifacts of a run directory."""
    with open(os.path.join(run_dir, "meta.json"), "r",
              encoding="utf-8") as fh:
        meta = json.load(fh)
    lh, ledger = _read_csv(os.path.join(run_dir, "ledger.csv"))
    _, entropy = _read_csv(os.path.join(run_dir, "entropy.csv"))
    _, series = _read_csv(os.path.join(run_dir, "series.csv"))
    snaps = []
    snap_dir = os.path.join(run_dir, "snapshots")
    for name in sorted(os.listdir(snap_dir)):
        if not name.endswith(".csv"):
            continue
        headers, fields = _read_csv(os.path.join(snap_dir, name))
        snaps.append(Snapshot(step=int(headers["step"]), headers=headers,
                              fields=fields))
    return RunArtifacts(meta=meta, ledger=ledger, entropy=entropy,
                        series=series, snapshots=snaps, ledger_headers=lh)


@dataclass
class VerifyReport:
    """Outcome of an offline re-audit of a run directory."""

    failures: list
    checked: dict

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def exit_code(self) -> int:
        if any(kind == "header" for kind, _ in self.failures):
            return 2
        return 4 if self.failures else 0

    def to_text(self) -> str:
        lines = ["verification " + ("pass" if self.ok else "FAIL")]
        for key, count in sorted(self.checked.items()):
            lines.append(f"  checked {key}: {count}")
        for kind, message in self.failures:
            lines.append(f"  FAIL [{kind}] {message}")
        return "\n".join(lines)


def _constants_from_meta(meta) -> Constants:
    c = meta["constants"]
    return Constants(g=c["g"], zeta_Gamma=c["zeta_gamma"],
                     K_Gamma=c["k_gamma"], theta_star=c["theta_star"],
                     theta_sup=c["theta_sup"])


def _grid_from_meta(meta) -> Grid:
    g = meta["grid"]
    return build_grid(g["dimension"], tuple(g["extent"]), tuple(g["cells"]),
                      h=g["boundary_exchange"])


def verify_run(run_dir) -> VerifyReport:
    """Re-audit a stored run without trusting its bookkeeping.

    Header consistency is checked on every file; the energy ledger
    arithmetic and inequality on every row; stored energy, the
    cell-equation residuals, the entropy balance line, the phase
    bounds, and the floor comparison are re-derived from scratch at
    every snapshot step.  ``exit_code`` is 2 for header mismatches
    (files from different runs), 4 for any violated invariant.
    """
    failures = []
    checked = {}

    def fail(kind, message):
        failures.append((kind, message))

    try:
        art = read_run(run_dir)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return VerifyReport(failures=[("header", f"unreadable run: {exc}")],
                            checked={})

    meta = art.meta
    if meta.get("format") != FORMAT_VERSION:
        fail("header", f"unsupported format {meta.get('format')}")
        return VerifyReport(failures=failures, checked=checked)

    constants = _constants_from_meta(meta)
    grid = _grid_from_meta(meta)
    model = builtin_material(meta["material"]["name"], constants)
    fam = truncate_family(model, meta["material"]["truncation"])
    tau = float(meta["time"]["tau"])
    n_steps = int(meta["time"]["n_steps"])
    c_r = float(meta["c_R"])
    comp_tol = float(meta["checks"]["comp_tol"])
    energy_rtol = float(meta["checks"]["energy_rtol"])

    mat_hash = material_hash(fam)
    if mat_hash != meta["material"]["hash"]:
        fail("header", "material hash does not match the rebuilt material")
    if art.ledger_headers.get("material_hash") not in (None, mat_hash):
        fail("header", "ledger.csv belongs to a different material")

    for snap in art.snapshots:
        hdr = snap.headers
        if hdr.get("material_hash") != meta["material"]["hash"]:
            fail("header", f"snapshot {snap.step}: material hash mismatch")
        if abs(float(hdr["tau"]) - tau) > 1e-15 * max(1.0, tau):
            fail("header", f"snapshot {snap.step}: tau mismatch")
        if hdr.get("cells") != ",".join(str(c) for c in grid.shape):
            fail("header", f"snapshot {snap.step}: grid mismatch")
    checked["headers"] = len(art.snapshots) + 1
    if any(kind == "header" for kind, _ in failures):
        return VerifyReport(failures=failures, checked=checked)

    # ledger arithmetic and the energy inequality, every row
    led = art.ledger
    n_rows = led["step"].size
    for i in range(n_rows):
        lhs, rhs = led["lhs"][i], led["rhs"][i]
        scale = max(1.0, abs(rhs))
        if abs((lhs - rhs) - led["defect"][i]) > 1e-12 * scale:
            fail("energy", f"ledger row {i}: defect column is inconsistent")
        if led["defect"][i] > energy_rtol * scale:
            fail("energy", f"ledger step {int(led['step'][i])}: "
                           f"inequality violated by {led['defect'][i]:.3e}")
        if bool(led["ok"][i]) != (led["defect"][i] <= energy_rtol * scale):
            fail("energy", f"ledger row {i}: ok flag is inconsistent")
    checked["ledger_rows"] = n_rows

    # entropy ledger signs, every row
    ent = art.entropy
    for i in range(ent["step"].size):
        if ent["min_integrand"][i] < 0.0:
            fail("entropy", f"entropy step {int(ent['step'][i])}: "
                            f"negative dissipation integrand")
        if ent["production"][i] < 0.0:
            fail("entropy", f"entropy step {int(ent['step'][i])}: "
                            f"negative total production")
    checked["entropy_rows"] = int(ent["step"].size)

    # floor sequence recomputation and the series-level comparison
    floor = lower_bound_sequence(fam, c_r, tau, n_steps)
    ser = art.series
    if ser["step"].size != n_steps + 1:
        fail("header", "series.csv does not cover every step")
        return VerifyReport(failures=failures, checked=checked)
    stored_floor = ser["floor_value"]
    if np.max(np.abs(stored_floor - floor)) > 1e-12 * max(1.0, floor[0]):
        fail("floor", "stored floor sequence does not match recomputation")
    checked_mask = ser["floor_checked"] > 0.5
    bad = checked_mask & (ser["theta_min"] < floor - 1e-15)
    for k in np.nonzero(bad)[0]:
        fail("floor", f"step {k}: reported minimum temperature "
                      f"{ser['theta_min'][k]:.6g} sits below the floor "
                      f"{floor[k]:.6g}")
    checked["floor_steps"] = int(np.count_nonzero(checked_mask))

    # full re-derivation at every snapshot step
    stored0_expected = meta.get("stored_energy_initial")
    for snap in art.snapshots:
        k = snap.step
        f = snap.fields
        theta, chi, u = f["theta"], f["chi"], f["u"]
        v_state = float(snap.headers["v_state"])
        label = f"snapshot step {k}"

        if chi.min() < 0.0 or chi.max() > 1.0:
            fail("bounds", f"{label}: phase fraction outside [0, 1]")
        if theta.max() >= fam.B:
            fail("bounds", f"{label}: temperature reached the cutoff")
        if k <= n_steps and theta.min() < floor[k] - 1e-15 and checked_mask[k]:
            fail("floor", f"{label}: minimum temperature below the floor")

        # stored energy against the ledger column
        stored = stored_energy(fam, grid, theta, chi, u, v_state, c_r, tau)
        if k == 0:
            if stored0_expected is not None and \
                    abs(stored - stored0_expected) > 1e-9 * max(1.0, abs(stored)):
                fail("energy", f"{label}: initial stored energy does not "
                               f"match the metadata")
        else:
            idx = np.nonzero(led["step"] == k)[0]
            if idx.size != 1:
                fail("energy", f"{label}: no ledger row for this step")
            else:
                ref = led["stored"][idx[0]]
                if abs(stored - ref) > 1e-9 * max(1.0, abs(ref)):
                    fail("energy", f"{label}: stored energy {stored:.12g} "
                                   f"does not match the ledger {ref:.12g}")

        if k == 0:
            continue
        theta_p, chi_p, u_p = f["theta_prev"], f["chi_prev"], f["u_prev"]
        tg = np.array([float(x) for x in
                       snap.headers["theta_gamma"].split(",")])

        # cell-equation residuals from the stored pair of states
        cells = prepare_cells(fam, grid, theta_p, chi_p, u_p, tau)
        sol = CellSolution(u=u, chi=chi,
                           active=np.zeros(chi.size, dtype=np.int8),
                           iterations=0)
        r_u, xi = cell_residuals(cells, sol, v_state)
        interior = (chi > 0.0) & (chi < 1.0)
        defect = np.where(interior, np.abs(xi), 0.0)
        defect = np.where(chi == 0.0, np.maximum(xi, 0.0), defect)
        defect = np.where(chi == 1.0, np.maximum(-xi, 0.0), defect)
        if np.max(np.abs(r_u)) > 10.0 * comp_tol:
            fail("complementarity", f"{label}: volume equation residual "
                                    f"{np.max(np.abs(r_u)):.3e}")
        if float(np.max(defect)) > comp_tol:
            fail("complementarity", f"{label}: constraint reaction defect "
                                    f"{float(np.max(defect)):.3e}")

        # entropy balance line against the stored ledger
        if theta.min() > 0.0 and theta_p.min() > 0.0:
            row = entropy_step(fam, grid, tau, theta_p, chi_p, u_p,
                               theta, chi, u, tg, step=k)
            idx = np.nonzero(ent["step"] == k)[0]
            if idx.size == 1:
                ref = ent["residual"][idx[0]]
                if abs(row.residual - ref) > 1e-9 * max(1.0, abs(ref)):
                    fail("entropy", f"{label}: balance residual does not "
                                    f"match the stored ledger")
            if row.min_integrand < 0.0:
                fail("entropy", f"{label}: negative dissipation integrand")

        # series cross-check
        if abs(ser["theta_min"][k] - theta.min()) > 1e-12:
            fail("bounds", f"{label}: series theta_min does not match "
                           f"the snapshot")
        if abs(ser["theta_max"][k] - theta.max()) > 1e-12:
            fail("bounds", f"{label}: series theta_max does not match "
                           f"the snapshot")
    checked["snapshots"] = len(art.snapshots)

    return VerifyReport(failures=failures, checked=checked)
