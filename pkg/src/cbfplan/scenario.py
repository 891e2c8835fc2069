"""Scenario description and its plain-text file format.

One directive per line, ``#`` starts a comment::

    name <identifier>
    start <x> <y> <theta>
    goal <x> <y> <radius>
    segment <name> <x1> <y1> <x2> <y2>
    halfplane <name> <nx> <ny> <offset>
    disc <name> <x> <y> <radius>
    agent <id> speed <v> radius <r> [delay <t>] path <x1> <y1> [<x2> <y2> ...]
    human-goal <x> <y>
    bounds <xmin> <ymin> <xmax> <ymax>
    param <key> <value>

Unknown directives, unknown parameters and malformed numbers are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .barriers import DiscObstacle, HalfPlaneObstacle, SegmentWall, barrier_value
from .geometry import GoalRegion, RobotState, to_transformed
from .params import FIELD_TYPES, PlannerParams, apply_overrides, coerce_param


class ScenarioError(ValueError):
    """Parse or validation failure; ``diagnostics`` holds one message per problem."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(diagnostics))


@dataclass(frozen=True)
class ScriptedAgent:
    """Pedestrian walking a polyline at constant speed, blind to the robot."""

    agent_id: str
    waypoints: tuple[tuple[float, float], ...]
    speed: float = 1.0
    body_radius: float = 0.25
    delay: float = 0.0  # stands at the first waypoint until this time

    def position_at(self, t: float) -> tuple[float, float]:
        s = self.speed * max(0.0, t - self.delay)
        pts = self.waypoints
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            seg = math.hypot(x1 - x0, y1 - y0)
            if s <= seg:
                f = s / seg if seg > 0 else 0.0
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
            s -= seg
        return pts[-1]


@dataclass
class ScenarioSpec:
    name: str = "scenario"
    start: RobotState | None = None
    goal: GoalRegion | None = None
    segments: dict[str, SegmentWall] = field(default_factory=dict)
    halfplanes: dict[str, HalfPlaneObstacle] = field(default_factory=dict)
    discs: dict[str, DiscObstacle] = field(default_factory=dict)
    agents: list[ScriptedAgent] = field(default_factory=list)
    human_goals: list[tuple[float, float]] = field(default_factory=list)
    bounds: tuple[float, float, float, float] | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def planner_params(self, base: PlannerParams | None = None) -> PlannerParams:
        return apply_overrides(base or PlannerParams(), self.params)

    def static_obstacles(self) -> list:
        return [*self.discs.values(), *self.halfplanes.values(), *self.segments.values()]


# --- parsing ---------------------------------------------------------------


def _floats(tokens: list[str], n: int | None, what: str) -> list[float]:
    if n is not None and len(tokens) != n:
        raise ValueError(f"{what} expects {n} numbers, got {len(tokens)}")
    try:
        out = [float(t) for t in tokens]
    except ValueError:
        raise ValueError(f"{what}: malformed number in {' '.join(tokens)!r}") from None
    if not all(math.isfinite(x) for x in out):
        raise ValueError(f"{what}: numbers must be finite")
    return out


def _parse_agent(tokens: list[str]) -> ScriptedAgent:
    if not tokens:
        raise ValueError("agent needs an id")
    agent_id, rest = tokens[0], tokens[1:]
    opts: dict[str, float] = {}
    while rest and rest[0] != "path":
        key = rest[0]
        if key not in ("speed", "radius", "delay"):
            raise ValueError(f"unknown agent option {key!r}")
        if key in opts:
            raise ValueError(f"agent option {key!r} given twice")
        if len(rest) < 2:
            raise ValueError(f"agent option {key!r} needs a value")
        opts[key] = _floats(rest[1:2], 1, f"agent {key}")[0]
        rest = rest[2:]
    if not rest:
        raise ValueError("agent needs a 'path'")
    coords = _floats(rest[1:], None, "agent path")
    if not coords or len(coords) % 2:
        raise ValueError("agent path needs a non-empty list of x y pairs")
    pts = tuple((coords[i], coords[i + 1]) for i in range(0, len(coords), 2))
    speed = opts.get("speed", 1.0)
    radius = opts.get("radius", 0.25)
    delay = opts.get("delay", 0.0)
    if speed < 0 or radius <= 0 or delay < 0:
        raise ValueError("agent speed and delay must be >= 0 and radius > 0")
    return ScriptedAgent(agent_id, pts, speed, radius, delay)


def parse_scenario(text: str, validate: bool = True) -> ScenarioSpec:
    spec = ScenarioSpec()
    errors: list[str] = []
    names: dict[str, int] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        try:
            if key in ("name", "start", "goal", "bounds") and key in seen:
                raise ValueError(f"{key!r} given more than once")
            seen.add(key)
            if key == "name":
                if len(args) != 1:
                    raise ValueError("name expects one identifier")
                spec.name = args[0]
            elif key == "start":
                spec.start = RobotState.make(*_floats(args, 3, "start"))
            elif key == "goal":
                x, y, r = _floats(args, 3, "goal")
                if r <= 0:
                    raise ValueError("goal radius must be positive")
                spec.goal = GoalRegion((x, y), r)
            elif key in ("segment", "halfplane", "disc"):
                if not args:
                    raise ValueError(f"{key} needs a name")
                name = args[0]
                if name in names:
                    raise ValueError(f"obstacle name {name!r} already used on line {names[name]}")
                if key == "segment":
                    x1, y1, x2, y2 = _floats(args[1:], 4, key)
                    spec.segments[name] = SegmentWall((x1, y1), (x2, y2))
                elif key == "halfplane":
                    nx, ny, off = _floats(args[1:], 3, key)
                    spec.halfplanes[name] = HalfPlaneObstacle((nx, ny), off)
                else:
                    x, y, r = _floats(args[1:], 3, key)
                    spec.discs[name] = DiscObstacle((x, y), r)
                names[name] = lineno
            elif key == "agent":
                agent = _parse_agent(args)
                if any(a.agent_id == agent.agent_id for a in spec.agents):
                    raise ValueError(f"duplicate agent id {agent.agent_id!r}")
                spec.agents.append(agent)
            elif key == "human-goal":
                spec.human_goals.append(tuple(_floats(args, 2, key)))
            elif key == "bounds":
                x0, y0, x1, y1 = _floats(args, 4, key)
                if not (x0 < x1 and y0 < y1):
                    raise ValueError("bounds must satisfy xmin < xmax and ymin < ymax")
                spec.bounds = (x0, y0, x1, y1)
            elif key == "param":
                if len(args) != 2:
                    raise ValueError("param expects a key and a value")
                if args[0] in spec.params:
                    raise ValueError(f"param {args[0]!r} given twice")
                spec.params[args[0]] = coerce_param(args[0], args[1])
            else:
                raise ValueError(f"unknown directive {key!r}")
        except (ValueError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            errors.append(f"line {lineno}: {msg}")
    if errors:
        raise ScenarioError(errors)
    if validate:
        validate_scenario(spec)
    return spec


def validate_scenario(spec: ScenarioSpec, params: PlannerParams | None = None) -> None:
    errors = []
    if spec.start is None:
        errors.append("missing 'start'")
    if spec.goal is None:
        errors.append("missing 'goal'")
    try:
        p = spec.planner_params(params)
    except (ValueError, KeyError) as exc:
        errors.append(f"bad parameters: {exc}")
        p = params or PlannerParams()
    if errors:
        raise ScenarioError(errors)
    gx, gy = spec.goal.center
    probe = to_transformed(RobotState(gx, gy, 0.0), 1e-12)
    for name, obs in [*spec.segments.items(), *spec.halfplanes.items(), *spec.discs.items()]:
        # barrier with zero robot radius is (squared) distance minus extent
        if isinstance(obs, HalfPlaneObstacle):
            clearance = barrier_value(probe, obs, 0.0)
            hit = clearance < spec.goal.radius
        else:
            hit = barrier_value(probe, obs, spec.goal.radius) < 0
        if hit:
            errors.append(f"goal region intersects obstacle {name!r}")
    ts = to_transformed(spec.start, p.ell)
    for name, obs in [*spec.segments.items(), *spec.halfplanes.items(), *spec.discs.items()]:
        if barrier_value(ts, obs, p.r_r) < 0:
            errors.append(f"start lies inside inflated obstacle {name!r}")
    for a in spec.agents:
        ax, ay = a.position_at(0.0)
        if math.hypot(ax - spec.start.x, ay - spec.start.y) < p.r_r + a.body_radius:
            errors.append(f"start overlaps agent {a.agent_id!r}")
    if errors:
        raise ScenarioError(errors)


# --- printing --------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def format_scenario(spec: ScenarioSpec) -> str:
    out = [f"name {spec.name}"]
    if spec.start is not None:
        out.append("start " + " ".join(map(_num, spec.start)))
    if spec.goal is not None:
        out.append(f"goal {_num(spec.goal.center[0])} {_num(spec.goal.center[1])} {_num(spec.goal.radius)}")
    if spec.bounds is not None:
        out.append("bounds " + " ".join(map(_num, spec.bounds)))
    for name, s in spec.segments.items():
        out.append(f"segment {name} " + " ".join(map(_num, (*s.start, *s.end))))
    for name, w in spec.halfplanes.items():
        out.append(f"halfplane {name} " + " ".join(map(_num, (*w.normal, w.offset))))
    for name, d in spec.discs.items():
        out.append(f"disc {name} " + " ".join(map(_num, (*d.center, d.radius))))
    for a in spec.agents:
        pts = " ".join(f"{_num(x)} {_num(y)}" for x, y in a.waypoints)
        out.append(f"agent {a.agent_id} speed {_num(a.speed)} radius {_num(a.body_radius)} delay {_num(a.delay)} path {pts}")
    for g in spec.human_goals:
        out.append(f"human-goal {_num(g[0])} {_num(g[1])}")
    for k, v in spec.params.items():
        out.append(f"param {k} {','.join(map(_num, v)) if isinstance(v, tuple) else v}")
    return "\n".join(out) + "\n"


# --- shipped fixtures ------------------------------------------------------


def builtin_names() -> list[str]:
    root = resources.files("cbfplan") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def load_scenario(name_or_path: str | Path) -> ScenarioSpec:
    """Load a shipped scenario by name, or any scenario file by path."""
    path = Path(name_or_path)
    if path.suffix == ".scn" or path.exists():
        return parse_scenario(path.read_text())
    res = resources.files("cbfplan") / "scenarios" / f"{name_or_path}.scn"
    if not res.is_file():
        raise ScenarioError([f"no scenario file or built-in scenario named {str(name_or_path)!r}"])
    return parse_scenario(res.read_text())
