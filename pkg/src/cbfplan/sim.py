"""Discrete-time corridor world with scripted pedestrians.

The world advances in steps of ``T_s``; the simulation clock stands in for
the wall clock of the planning loop. Collision checks use the true robot
position and pedestrian bodies, not the planner's inflated sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping

from .barriers import DiscObstacle, HalfPlaneObstacle, SegmentWall
from .geometry import ZERO_CONTROL, ControlInput, RobotState, in_goal, integrate_unicycle, to_transformed
from .params import PlannerParams, apply_overrides
from .planner import TreePlanner
from .prediction import GridSpec
from .scenario import ScenarioSpec, ScriptedAgent, validate_scenario

BOX_TOL = 1e-9


@dataclass
class WorldState:
    step: int
    sim_time: float
    robot: RobotState
    agents: dict[str, tuple[float, float]]
    collision: bool = False


@dataclass
class TraceRecord:
    sim_time: float
    robot: RobotState  # state when the control was applied
    control: ControlInput
    agents: dict[str, tuple[float, float]]
    discs: dict[Hashable, list[tuple[float, float, float, float]]]  # (cx, cy, level-set radius, t)
    selected_cost: float
    selected_displacement: float  # distance from the root to the selected vertex [m]
    min_h: float  # barrier minimum of the state reached by this control
    tree_size: int
    inserted: int


@dataclass
class SimOutcome:
    success: bool
    collision: bool
    time_to_goal: float | None
    min_clearance: float
    min_h: float
    steps: int
    sim_time: float

    @property
    def status(self) -> str:
        return "success" if self.success else "collision" if self.collision else "timeout"


class World:
    def __init__(self, spec: ScenarioSpec, params: PlannerParams):
        self.spec = spec
        self.params = params
        self.agents: dict[str, ScriptedAgent] = {a.agent_id: a for a in spec.agents}
        self.state = WorldState(0, 0.0, spec.start, self._agent_positions(0.0))
        self.state.collision = self.collides(self.state)

    def _agent_positions(self, t: float) -> dict[str, tuple[float, float]]:
        return {aid: a.position_at(t) for aid, a in self.agents.items()}

    def clearance(self, ws: WorldState) -> float:
        """Smallest gap between the robot disc and any pedestrian body."""
        r = self.params.r_r
        gaps = [
            math.hypot(ws.robot.x - x, ws.robot.y - y) - r - self.agents[aid].body_radius
            for aid, (x, y) in ws.agents.items()
        ]
        return min(gaps, default=math.inf)

    def static_clearance(self, robot: RobotState) -> float:
        r = self.params.r_r
        gaps = [math.inf]
        for d in self.spec.discs.values():
            gaps.append(math.hypot(robot.x - d.center[0], robot.y - d.center[1]) - d.radius - r)
        for w in self.spec.halfplanes.values():
            gaps.append(w.normal[0] * robot.x + w.normal[1] * robot.y - w.offset - r)
        for s in self.spec.segments.values():
            qx, qy = s.closest_point((robot.x, robot.y))
            gaps.append(math.hypot(robot.x - qx, robot.y - qy) - r)
        return min(gaps)

    def collides(self, ws: WorldState) -> bool:
        return self.clearance(ws) < 0 or self.static_clearance(ws.robot) < 0

    def step_world(self, control: ControlInput) -> WorldState:
        p = self.params
        if not (
            p.v_min - BOX_TOL <= control.v <= p.v_max + BOX_TOL
            and abs(control.omega) <= p.omega_max + BOX_TOL
        ):
            raise ValueError(f"control {control} outside the actuator box")
        ws = self.state
        step = ws.step + 1
        t = step * p.T_s
        nxt = WorldState(step, t, integrate_unicycle(ws.robot, control, p.T_s), self._agent_positions(t))
        nxt.collision = ws.collision or self.collides(nxt)
        self.state = nxt
        return nxt

    def observe(self) -> list[tuple[str, float, tuple[float, float]]]:
        ws = self.state
        return [(aid, ws.sim_time, pos) for aid, pos in ws.agents.items()]


def effective_params(spec: ScenarioSpec, params: PlannerParams | None, overrides: Mapping[str, Any] | None) -> PlannerParams:
    """Defaults, then the scenario's own ``param`` lines, then caller overrides."""
    p = spec.planner_params(params)
    return apply_overrides(p, overrides) if overrides else p


def run_scenario(
    spec: ScenarioSpec,
    params: PlannerParams | None = None,
    max_time: float = 120.0,
    overrides: Mapping[str, Any] | None = None,
    on_cycle: Callable[[TreePlanner, Any], None] | None = None,
) -> tuple[SimOutcome, list[TraceRecord]]:
    """Run the planning loop until the goal, a collision or ``max_time``."""
    p = effective_params(spec, params, overrides)
    validate_scenario(spec, p)
    world = World(spec, p)
    grid = GridSpec(cell_size=p.cell_size, bounds=spec.bounds)
    planner = TreePlanner(spec.goal, spec.static_obstacles(), p, spec.human_goals, grid)
    trace: list[TraceRecord] = []
    min_clear = world.clearance(world.state)
    min_h = math.inf
    max_steps = int(round(max_time / p.T_s))
    planner.observe(world.observe())
    while True:
        ws = world.state
        if ws.collision or in_goal(ws.robot, spec.goal) or ws.step >= max_steps:
            break
        res = planner.plan_cycle(ws.sim_time, ws.robot)
        if on_cycle is not None:
            on_cycle(planner, res)
        field_ = planner.field
        controls = res.commit[: p.commit_horizon] if res.first_edge is not None else [ZERO_CONTROL]
        discs = {
            aid: [(d.center[0], d.center[1], d.radius, d.timestamp) for d in ds if not d.vacuous]
            for aid, ds in planner.discs.items()
        }
        root = planner.tree.root.state
        disp = math.hypot(res.selected.state.x - root.x, res.selected.state.y - root.y)
        executed = []
        for u in controls:
            before = world.state
            after = world.step_world(u)
            executed.append(u)
            h = field_.min_barrier(to_transformed(after.robot, p.ell), after.sim_time, p.r_r)
            min_h = min(min_h, h)
            min_clear = min(min_clear, world.clearance(after))
            trace.append(
                TraceRecord(
                    before.sim_time, before.robot, u, dict(before.agents), discs,
                    res.selected.cost, disp, h, len(planner.tree), res.inserted,
                )
            )
            planner.observe(world.observe())
            if after.collision or in_goal(after.robot, spec.goal) or after.step >= max_steps:
                break
        ws = world.state
        planner.advance(res, executed, ws.robot, ws.sim_time)
    ws = world.state
    success = in_goal(ws.robot, spec.goal) and not ws.collision
    outcome = SimOutcome(
        success=success,
        collision=ws.collision,
        time_to_goal=ws.sim_time if success else None,
        min_clearance=min_clear,
        min_h=min_h,
        steps=ws.step,
        sim_time=ws.sim_time,
    )
    return outcome, trace
