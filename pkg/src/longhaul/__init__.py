"""Simultaneous truck routing and crew scheduling on time-expanded digraphs."""

from .model_core import Horizon, Instance, Request, example_instance, validate_instance
from .timegraphs import LT, LTC, LTR, LTX, build_graphs
from .formulations import BuildOptions, build_model, solution_to_plan
from .bnc import SolverConfig, solve_milp
from .oracle import exhaustive_solve

__all__ = [
    "Horizon", "Instance", "Request", "example_instance", "validate_instance",
    "LT", "LTC", "LTR", "LTX", "build_graphs",
    "BuildOptions", "build_model", "solution_to_plan",
    "SolverConfig", "solve_milp", "exhaustive_solve",
]
__version__ = "0.1.0"
