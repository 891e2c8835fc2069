"""Sampling-based motion planning for a unicycle robot among pedestrians.

A tree of short control segments is grown from the robot's state. Each
segment is produced by a safety-filtered controller that keeps the robot
outside walls and outside the likely future positions of pedestrians.
"""

from .geometry import ControlInput, GoalRegion, RobotState
from .params import PlannerParams
from .planner import TreePlanner
from .scenario import ScenarioError, ScenarioSpec, load_scenario, parse_scenario
from .sim import SimOutcome, TraceRecord, run_scenario
from .steering import QpProblem, solve_qp, steer
from .trace import emit_trace

__all__ = [
    "ControlInput",
    "GoalRegion",
    "PlannerParams",
    "QpProblem",
    "RobotState",
    "ScenarioError",
    "ScenarioSpec",
    "SimOutcome",
    "TraceRecord",
    "TreePlanner",
    "emit_trace",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "solve_qp",
    "steer",
]
