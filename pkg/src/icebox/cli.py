"""Batch command-line interface: configure, run, inspect.

Subcommands
-----------
simulate <config>
    Run the configured problem with all runtime checks and persist the
    trajectory artifacts (snapshots, ledgers, summary, optional plots).
verify <run-dir>
    Re-audit a stored run offline; exits nonzero if any header or
    invariant check fails.
study tau|perturb|truncation <config>
    Step-refinement, data-perturbation, or truncation-inactivity
    experiment; writes a text report next to the run artifacts.
material-check <config>
    Validate the configured material against the structural
    hypotheses and report the recommended stabilization weight and
    step ceiling.

Exit codes: 0 ok, 2 configuration or header error, 3 solver failure,
4 invariant violation.  Setting ``ICEBOX_THREADS=<n>`` before launch
caps the numeric thread pools; artifacts are bitwise deterministic
either way.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .cellsolve import SolverError
from .config import ConfigError, build_runspec, parse_config
from .diagnostics import (perturbation_experiment, tau_convergence_study,
                          truncation_study)
from .materials import validate_hypothesis
from .runio import verify_run, write_run
from .stepper import InvariantViolation, compute_cR, run, tau_ceiling

__all__ = ["main"]


def _write_report(out_dir, name, text) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
    return path


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    spec = build_runspec(cfg)
    result = run(spec, checks=cfg.checks)
    out_dir = args.output or cfg.output_dir
    plots = True if args.plots else None
    write_run(result, out_dir, config=cfg, plots=plots)
    print(result.summary_text())
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    report = verify_run(args.run_dir)
    print(report.to_text())
    return report.exit_code


def cmd_study(args) -> int:
    cfg = parse_config(args.config)
    spec = build_runspec(cfg)
    out_dir = args.output or cfg.output_dir

    if args.kind == "tau":
        levels = args.levels if args.levels is not None else cfg.tau_levels
        report = tau_convergence_study(spec, levels=levels)
        path = _write_report(out_dir, "study_tau.txt", report.to_text())
        print(report.to_text())
        print(f"report written to {path}")
        return 0 if report.ok and report.entropy_decreasing else 4

    if args.kind == "perturb":
        try:
            report = perturbation_experiment(spec, deltas=cfg.deltas,
                                             fields=cfg.perturb_fields,
                                             seed=cfg.seed)
        except ValueError as exc:
            raise ConfigError(str(exc))
        path = _write_report(out_dir, "study_perturb.txt", report.to_text())
        print(report.to_text())
        print(f"report written to {path}")
        ok = math.isfinite(report.ratio_spread) and report.ratio_spread <= 10.0
        return 0 if ok else 4

    report = truncation_study(spec, factor=cfg.truncation_factor)
    path = _write_report(out_dir, "study_truncation.txt", report.to_text())
    print(report.to_text())
    print(f"report written to {path}")
    return 0 if report.ok else 4


def cmd_material_check(args) -> int:
    cfg = parse_config(args.config)
    report = validate_hypothesis(cfg.fam.model)
    print(report.to_text())
    rec = compute_cR(cfg.fam)
    ceil = tau_ceiling(cfg.fam)
    print(f"truncation cutoff       {cfg.fam.B:.6g}")
    print(f"recommended c_R         {rec:.6g}")
    print(f"semi-implicit tau limit {ceil:.6g} (configured tau {cfg.tau:g})")
    if cfg.stabilization is not None and cfg.stabilization < rec:
        print("note: configured stabilization sits below the "
              "recommendation; the temperature floor is not guaranteed")
    return 0 if report.passed else 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icebox",
        description="Freezing-water simulator with runtime-verified "
                    "discrete inequalities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configuration and persist "
                                        "artifacts")
    p.add_argument("config", help="path to a JSON configuration")
    p.add_argument("--output", help="override the configured output "
                                    "directory")
    p.add_argument("--plots", action="store_true",
                   help="emit SVG plots regardless of the configuration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-audit a stored run directory")
    p.add_argument("run_dir", help="run directory written by simulate")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("study", help="refinement, perturbation, or "
                                     "truncation experiment")
    p.add_argument("kind", choices=("tau", "perturb", "truncation"))
    p.add_argument("config", help="path to a JSON configuration")
    p.add_argument("--levels", type=int, default=None,
                   help="refinement levels for the tau study")
    p.add_argument("--output", help="override the configured output "
                                    "directory")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("material-check", help="validate the configured "
                                              "material")
    p.add_argument("config", help="path to a JSON configuration")
    p.set_defaults(func=cmd_material_check)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
