"""Characteristics / finite-difference solver for the McKendrick-von Foerster
equation with diffusion in age and Dirichlet boundary conditions."""

__version__ = "0.1.0"

from .discretization import GridSpec, QuadratureRule, build_grid, build_weights, integrate, weighted_population
from .errors import MVDError, NonFiniteResult, NonFiniteState, StabilityViolation, FootOutOfCell
from .models import builtin, compatibility_check, mollified_initial, residual_oracle
from .scheme import CoefficientSet, SolverState, Trajectory, run, step, thomas_solve
from .verify import ConvergenceReport, convergence_ladder, max_node_error, self_convergence, steady_state_gap

__all__ = [
    "GridSpec",
    "QuadratureRule",
    "build_grid",
    "build_weights",
    "integrate",
    "weighted_population",
    "MVDError",
    "NonFiniteResult",
    "NonFiniteState",
    "StabilityViolation",
    "FootOutOfCell",
    "builtin",
    "compatibility_check",
    "mollified_initial",
    "residual_oracle",
    "CoefficientSet",
    "SolverState",
    "Trajectory",
    "run",
    "step",
    "thomas_solve",
    "ConvergenceReport",
    "convergence_ladder",
    "max_node_error",
    "self_convergence",
    "steady_state_gap",
]
