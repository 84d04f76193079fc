"""Particle gradient descent on functions of uniformly weighted sparse measures."""

from .analysis import (
    check_contraction,
    check_displacement_jensen,
    check_smoothness_consequences,
    check_star_convexity,
    finite_difference_gradient,
)
from .frankwolfe import GridDomain, approximation_error_sweep, frank_wolfe
from .measure import SparseMeasure, min_pairwise_distance, random_init
from .objectives import (
    circle_net_objective,
    energy_distance_discrete,
    energy_distance_uniform,
    mmd_objective,
    quadratic_well,
    tensor_objective,
    w2_objective,
)
from .optim import NoiseSpec, StepSchedule, Trajectory, gd, pgd, run_batch
from .transport import displacement_interpolate, optimal_plan, w2_squared

__version__ = "0.1.0"

__all__ = [
    "SparseMeasure",
    "random_init",
    "min_pairwise_distance",
    "optimal_plan",
    "w2_squared",
    "displacement_interpolate",
    "energy_distance_discrete",
    "energy_distance_uniform",
    "mmd_objective",
    "w2_objective",
    "tensor_objective",
    "circle_net_objective",
    "quadratic_well",
    "StepSchedule",
    "NoiseSpec",
    "Trajectory",
    "gd",
    "pgd",
    "run_batch",
    "check_displacement_jensen",
    "check_star_convexity",
    "check_smoothness_consequences",
    "check_contraction",
    "finite_difference_gradient",
    "GridDomain",
    "frank_wolfe",
    "approximation_error_sweep",
]
