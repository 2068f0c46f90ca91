"""Ground states of rotating Bose-Einstein condensates by projected Sobolev gradient flows."""

from .energy import EnergyBreakdown, eigen_residual, energy, first_variation, rayleigh, second_variation_apply
from .errors import (
    ConfigError,
    DissipationError,
    FieldFormatError,
    GPFlowError,
    GridMismatchError,
    IndefiniteMetricError,
    NonConvergenceError,
    NotNormalizedError,
    SolverError,
    ZeroFieldError,
)
from .flow import (
    FixedStep,
    FlowConfig,
    GoldenSection,
    SolveReport,
    euler_step,
    golden_step,
    metric_gradient,
    project_tangent,
    projected_gradient,
    run_flow,
)
from .grid import Field, Grid, l2_inner, load_field, mass, retract, save_field
from .linsolve import SolveConfig, g_map, riesz_solve
from .operators import Metric, Params, assemble_metric, check_admissibility, x_inner, x_norm
from .quotient import align_phase, estimate_rate, rho_pair

__all__ = [
    "EnergyBreakdown",
    "eigen_residual",
    "energy",
    "first_variation",
    "rayleigh",
    "second_variation_apply",
    "ConfigError",
    "DissipationError",
    "FieldFormatError",
    "GPFlowError",
    "GridMismatchError",
    "IndefiniteMetricError",
    "NonConvergenceError",
    "NotNormalizedError",
    "SolverError",
    "ZeroFieldError",
    "FixedStep",
    "FlowConfig",
    "GoldenSection",
    "SolveReport",
    "euler_step",
    "golden_step",
    "metric_gradient",
    "project_tangent",
    "projected_gradient",
    "run_flow",
    "Field",
    "Grid",
    "l2_inner",
    "load_field",
    "mass",
    "retract",
    "save_field",
    "SolveConfig",
    "g_map",
    "riesz_solve",
    "Metric",
    "Params",
    "assemble_metric",
    "check_admissibility",
    "x_inner",
    "x_norm",
    "align_phase",
    "estimate_rate",
    "rho_pair",
]

__version__ = "0.1.0"
