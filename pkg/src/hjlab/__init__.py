"""Monotone finite-difference solvers and checks for viscous Hamilton-Jacobi equations
``delta u - tr(A D^2 u) + b|Du|^m + v.Du = f`` with superlinear growth ``m > 1``."""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import (
    comparison_check,
    convex_combination_check,
    extrapolation_check,
    lipschitz_scaling_study,
    measure_holder,
    measure_lipschitz,
    time_comparison_check,
    time_lipschitz_check,
)
from .coefficients import (
    Constant,
    Cosine,
    DiffusionSpec,
    Drift,
    FromFunction,
    HamiltonianSpec,
    ProblemSpec,
    Quadratic,
    Ramp,
    Scaled,
    audit_hypotheses,
    hopf_lax_metric_oracle,
    structural_constants,
)
from .config import ConfigError, ExperimentConfig, parse_config
from .domain_grid import Domain, Grid, GridFunction, build_grid, distance_to_boundary, zeta
from .metric_problem import (
    MetricSolution,
    check_concavity_in_mu,
    check_domain_monotonicity,
    check_mu_monotonicity,
    check_oscillation_bound,
    check_subadditivity,
    estimate_hbar_star,
    m_tilde,
    solve_metric,
)
from .report import Report, digest
from .runner import RunManifest, emit_plot_data, run
from .scheme import (
    MonotonicityError,
    SchemeParams,
    certify_monotonicity,
    make_discretization,
    make_params,
    residual,
)
from .solvers import SolveStats, Trajectory, richardson_order, solve_stationary, solve_time_dependent
from .state_constraints import barrier_sandwich_check, solve_state_constraint
