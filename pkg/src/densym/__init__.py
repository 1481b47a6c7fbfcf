"""Transition densities of decoupled 2-D diffusions through the density-symmetry transform."""
from .errors import DensymError, NumericalError, ValidationError
from .mc import BumpDensity, MCConfig, MCEstimate, estimate_expectation, estimate_q, estimate_q_grid, \
    simulate_paths
from .model import ModelSpec, TransformedModel, build_transformed, cir_rate_logprice, custom, heston, \
    validate_assumptions
from .pde import Grid2D, assemble_density, make_grid, solve_backward
from .speed import SpeedDensity

__version__ = "0.1.0"

__all__ = [
    "BumpDensity", "DensymError", "Grid2D", "MCConfig", "MCEstimate", "ModelSpec", "NumericalError",
    "SpeedDensity", "TransformedModel", "ValidationError", "assemble_density", "build_transformed",
    "cir_rate_logprice", "custom", "estimate_expectation", "estimate_q", "estimate_q_grid", "heston",
    "make_grid", "simulate_paths", "solve_backward", "validate_assumptions",
]
