"""Euler-Maruyama simulation of stochastic delay equations with Brownian or jump noise."""

__version__ = "0.1.0"

from .convergence import ExperimentPlan, LevelResult, RateReport, fit_order, moment_sup_check, run_convergence
from .drivers import BrownianDriver, JumpDriver, MarkDistribution, sample_brownian, sample_jumps
from .em_solver import DivergenceError, PathBatch, PathLattice, em_brownian, em_jump, increment_moments, simulate_paths
from .models import (
    InitialSegment,
    ModelSpec,
    build_model,
    cubic_delay_model,
    power_delay_jump_model,
    validate_conditions,
)
from .smoothing import SmoothingParams, check_properties, phi, psi, v_lift
from .time_grid import GridError, TimeGrid, make_grid

__all__ = [
    "BrownianDriver",
    "DivergenceError",
    "ExperimentPlan",
    "GridError",
    "InitialSegment",
    "JumpDriver",
    "LevelResult",
    "MarkDistribution",
    "ModelSpec",
    "PathBatch",
    "PathLattice",
    "RateReport",
    "SmoothingParams",
    "TimeGrid",
    "build_model",
    "check_properties",
    "cubic_delay_model",
    "em_brownian",
    "em_jump",
    "fit_order",
    "increment_moments",
    "make_grid",
    "moment_sup_check",
    "phi",
    "power_delay_jump_model",
    "psi",
    "run_convergence",
    "sample_brownian",
    "sample_jumps",
    "simulate_paths",
    "v_lift",
    "validate_conditions",
]
