"""Simulation and verification toolkit for a two-compartment
structured-population model of clonal selection.

The continuum model tracks densities u1 (dividing) and u2 (mature) over a
trait interval; clones compete through a single feedback signal
s = 1/(1 + K rho2).  Reductions to finitely many clones and to one clone
with constant self-renewal are included, together with the measure-space
metrics, a-priori bound certificates, Lyapunov descent checks, and
randomized verification suites that make the asymptotic theory testable
numerically.
"""

from .analysis import (BoundsCertificate, BoundsReport, DescentReport,
                       EquilibriumPoint, StabilityReport, bounds_certificate,
                       check_bounds, decay_envelope, lyapunov,
                       lyapunov_descent_check, perturbation_f, predict_limit,
                       stability_check, steady_state)
from .config import (RunConfig, load_config, parse_config, parse_expression,
                     preset)
from .core import (FiniteCloneState, Grid, ModelParams, PopulationState,
                   SelfRenewalProfile, TwoCompartmentState, argmax_set,
                   eval_profile, profile_on_grid, signal)
from .dynamics import (IntegratorConfig, Observer, Snapshot, Trajectory,
                       integrate, rhs_continuum, rhs_finite,
                       rhs_two_compartment, simulate_continuum,
                       simulate_finite, simulate_two_compartment, total_mass)
from .errors import (BlowupError, CloneDynError, ConfigError, DomainError,
                     IntegrationError, MassMismatchError, NegativityError,
                     NumericsError, ResolutionError, ShapeError)
from .measures import (DiscreteMeasure, bump_kernel, concentration_stats,
                       flat_metric, flat_upper_bound, mollify, read_measure,
                       wasserstein1, write_measure)
from .verify import (flat_metric_grid, flat_metric_oracle, run_suites,
                     wasserstein1_lp)

__version__ = "0.1.0"

__all__ = [
    "BlowupError", "BoundsCertificate", "BoundsReport", "CloneDynError",
    "ConfigError", "DescentReport", "DiscreteMeasure", "DomainError",
    "EquilibriumPoint", "FiniteCloneState", "Grid", "IntegrationError",
    "IntegratorConfig", "MassMismatchError", "ModelParams",
    "NegativityError", "NumericsError", "Observer", "PopulationState",
    "ResolutionError", "RunConfig", "SelfRenewalProfile", "ShapeError",
    "Snapshot", "StabilityReport", "Trajectory", "TwoCompartmentState",
    "argmax_set", "bounds_certificate", "bump_kernel", "check_bounds",
    "concentration_stats", "decay_envelope", "eval_profile", "flat_metric",
    "flat_metric_grid", "flat_metric_oracle", "flat_upper_bound",
    "integrate", "load_config", "lyapunov", "lyapunov_descent_check",
    "mollify", "parse_config", "parse_expression", "perturbation_f",
    "predict_limit", "preset", "profile_on_grid", "read_measure",
    "rhs_continuum", "rhs_finite", "rhs_two_compartment", "run_suites",
    "signal", "simulate_continuum", "simulate_finite",
    "simulate_two_compartment", "stability_check", "steady_state",
    "total_mass", "wasserstein1", "wasserstein1_lp", "write_measure",
]
