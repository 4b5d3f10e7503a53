"""Simulation of pull ("robot") vs push ("sensors") web monitoring, plus a
reference sensor notification protocol."""

from .engine import ContractViolation, EventQueue, RngStream, exp_delay, uniform_int
from .experiment import ExperimentPlan, RunResult, run_plan, run_simulation, summarize, table1_plan, write_results
from .sensors import DetectionMode
from .world import RateSpec, WorldConfig

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "DetectionMode",
    "EventQueue",
    "ExperimentPlan",
    "RateSpec",
    "RngStream",
    "RunResult",
    "WorldConfig",
    "exp_delay",
    "run_plan",
    "run_simulation",
    "summarize",
    "table1_plan",
    "uniform_int",
    "write_results",
]
