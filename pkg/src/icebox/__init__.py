"""icebox: freezing-water simulator with runtime-verified discrete inequalities.

The package simulates the coupled evolution of temperature, relative
volume increment and liquid fraction of water confined in an elastic
container, using a semi-implicit time discretization whose qualitative
guarantees (energy dissipation, strictly positive temperature, exact
phase-fraction bounds) are re-checked at runtime on every step.
"""

import os as _os

# opt-in thread cap; must act before numpy initializes its pools
_threads = _os.environ.get("ICEBOX_THREADS")
if _threads and _threads.isdigit():
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .materials import (
    Constants,
    HypothesisBounds,
    MaterialModel,
    PiecewisePoly,
    TruncationFamily,
    builtin_material,
    caloric_e1,
    caloric_f1,
    caloric_s1,
    make_material,
    reference_material,
    truncate_family,
    validate_hypothesis,
)
from .grid import Grid, build_grid
from .stepper import (
    InvariantViolation,
    RunChecks,
    RunResult,
    RunSpec,
    compute_cR,
    run,
    step,
    tau_ceiling,
)
from .diagnostics import (
    bounds_monitor,
    energy_ledger_check,
    entropy_series,
    extended_energy_monitor,
    lower_bound_sequence,
    perturbation_experiment,
    tau_convergence_study,
    theta_floor_limit,
    truncation_study,
)
from .config import ConfigError, SimConfig, build_runspec, parse_config

__all__ = [
    "Constants",
    "HypothesisBounds",
    "MaterialModel",
    "PiecewisePoly",
    "TruncationFamily",
    "builtin_material",
    "caloric_e1",
    "caloric_f1",
    "caloric_s1",
    "make_material",
    "reference_material",
    "truncate_family",
    "validate_hypothesis",
    "Grid",
    "build_grid",
    "InvariantViolation",
    "RunChecks",
    "RunResult",
    "RunSpec",
    "compute_cR",
    "run",
    "step",
    "tau_ceiling",
    "bounds_monitor",
    "energy_ledger_check",
    "entropy_series",
    "extended_energy_monitor",
    "lower_bound_sequence",
    "perturbation_experiment",
    "tau_convergence_study",
    "theta_floor_limit",
    "truncation_study",
    "ConfigError",
    "SimConfig",
    "build_runspec",
    "parse_config",
    "__version__",
]
