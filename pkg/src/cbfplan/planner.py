"""Time-budgeted RRT whose edges come from the CBF steering QP.

Each planning cycle grows the tree under a budget, picks the vertex with the
lowest cost ``a1 * dist_to_goal / (a2 * h)``, and returns the first control
of the first edge on the path to it. After that control is executed the tree
is re-rooted at the new robot state, keeping the branch that was followed.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .barriers import DiscObstacle, HalfPlaneObstacle, ObstacleField, SegmentWall
from .geometry import (
    ZERO_CONTROL,
    ControlInput,
    GoalRegion,
    RobotState,
    angle_diff,
    bearing,
    goal_distance,
    to_transformed,
    wrap_angle,
)
from .params import PlannerParams
from .prediction import GridSpec, PredictedDisc, PredictorConfig, TrackletStore, predict_discs
from .steering import SteerResult, steer

REPLAY_TOL = 1e-6


@dataclass(frozen=True)
class TreeEdge:
    controls: tuple[ControlInput, ...]
    states: tuple[RobotState, ...]  # states[0] is the parent's state

    def lookahead(self, ell: float) -> np.ndarray:
        """Look-ahead points of ``states[1:]`` as an ``(n, 2)`` array, cached per ``ell``."""
        cache = self.__dict__.setdefault("_lookahead", {})
        pts = cache.get(ell)
        if pts is None:
            arr = np.array(self.states[1:], dtype=float)
            pts = cache[ell] = arr[:, :2] + ell * np.column_stack([np.cos(arr[:, 2]), np.sin(arr[:, 2])])
        return pts


@dataclass(eq=False)
class TreeVertex:
    state: RobotState
    cost: float
    time: float
    parent: "TreeVertex | None" = None
    edge: TreeEdge | None = None
    order: int = 0
    children: list["TreeVertex"] = field(default_factory=list, repr=False)


class PlanTree:
    """Vertices in insertion order; ``vertices[0]`` is the root.

    ``best`` is the minimum-cost vertex (ties to the earliest), kept up to
    date on insertion so selection at the end of a cycle is constant time.
    Call :meth:`refresh_best` after changing costs in place.
    """

    def __init__(self, root_state: RobotState, root_time: float, root_cost: float = math.inf):
        self._counter = itertools.count()
        self.root = TreeVertex(root_state, root_cost, root_time, order=next(self._counter))
        self.vertices: list[TreeVertex] = [self.root]
        self.best = self.root

    def __len__(self) -> int:
        return len(self.vertices)

    def add(self, parent: TreeVertex, seg: SteerResult, cost: float) -> TreeVertex:
        edge = TreeEdge(tuple(seg.controls), tuple(seg.states))
        v = TreeVertex(seg.states[-1], cost, seg.end_time, parent, edge, next(self._counter))
        parent.children.append(v)
        self.vertices.append(v)
        if (v.cost, v.order) < (self.best.cost, self.best.order):
            self.best = v
        return v

    def refresh_best(self) -> TreeVertex:
        self.best = min(self.vertices, key=lambda v: (v.cost, v.order))
        return self.best

    def subtree(self, v: TreeVertex) -> list[TreeVertex]:
        out, stack = [], [v]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(reversed(u.children))
        return out

    def path_to(self, v: TreeVertex) -> list[TreeVertex]:
        path = [v]
        while path[-1].parent is not None:
            path.append(path[-1].parent)
        return path[::-1]

    def _rebuild(self) -> None:
        self.vertices = sorted(self.subtree(self.root), key=lambda u: u.order)


# --- sampling --------------------------------------------------------------


def vertex_sample(tree: PlanTree, rng: np.random.Generator) -> TreeVertex:
    if not len(tree):
        raise ValueError("cannot sample from an empty tree")
    return tree.vertices[int(rng.integers(len(tree.vertices)))]


def state_sample(v: TreeVertex, goal: GoalRegion, sigma_theta: float, rng: np.random.Generator) -> RobotState:
    """Vertex position with a heading drawn around the bearing to the goal."""
    theta_g = bearing((v.state.x, v.state.y), goal.center)
    return RobotState(v.state.x, v.state.y, wrap_angle(theta_g + sigma_theta * rng.standard_normal()))


def ref_sample(
    x_rand: RobotState,
    goal: GoalRegion,
    params: PlannerParams,
    rng: np.random.Generator,
    ref_heading: float | None = None,
) -> ControlInput:
    """Uniform ``v_ref``; ``omega_ref = a_omega * wrap(theta - ref_heading)``, clamped.

    ``ref_heading`` defaults to the bearing to the goal. The tree passes the
    heading of the vertex being extended instead, so the segment turns
    toward the sampled (goal-biased) heading.
    """
    v_ref = rng.uniform(params.v_sample_min, params.v_max)
    if ref_heading is None:
        ref_heading = bearing((x_rand.x, x_rand.y), goal.center)
    w = params.a_omega * angle_diff(x_rand.theta, ref_heading)
    return ControlInput(float(v_ref), min(max(w, -params.omega_max), params.omega_max))


def vertex_cost(state: RobotState, t: float, goal: GoalRegion, obstacles: ObstacleField, params: PlannerParams) -> float:
    dist = goal_distance(state, goal)
    if dist == 0.0:
        return 0.0
    h = obstacles.min_barrier(to_transformed(state, params.ell), t, params.r_r, params.cutoff)
    return params.a1 * dist / (params.a2 * _cost_h(h, params))


def _cost_h(h: float, params: PlannerParams) -> float:
    h = max(h, params.h_floor)
    return h if params.h_cap is None else min(h, params.h_cap)


# --- growth ----------------------------------------------------------------


def grow_once(
    tree: PlanTree,
    obstacles: ObstacleField,
    goal: GoalRegion,
    params: PlannerParams,
    rng: np.random.Generator,
) -> TreeVertex | None:
    """One expansion attempt; returns the new vertex or ``None`` if steering failed.

    The sampled heading only shapes the reference input; the segment itself
    starts from the sampled vertex's actual state so that edges chain.
    """
    v = vertex_sample(tree, rng)
    x_rand = state_sample(v, goal, params.sigma_theta, rng)
    u_ref = ref_sample(x_rand, goal, params, rng, ref_heading=v.state.theta)
    seg = steer(v.state, v.time, u_ref, params.N_s, obstacles, params)
    if not seg.feasible:
        return None
    cost = vertex_cost(seg.states[-1], seg.end_time, goal, obstacles, params)
    return tree.add(v, seg, cost)


@dataclass
class CycleResult:
    control: ControlInput
    selected: TreeVertex
    first_edge: TreeVertex | None  # child of the root on the selected path
    inserted: int
    attempts: int
    duration: float  # wall-clock seconds spent growing

    @property
    def commit(self) -> list[ControlInput]:
        """Controls of the first edge on the selected path (zero control if none)."""
        if self.first_edge is None:
            return [ZERO_CONTROL]
        return list(self.first_edge.edge.controls)


def select_vertex(tree: PlanTree) -> TreeVertex:
    """Minimum cost; ties go to the earliest inserted vertex."""
    return tree.best


def extract_control(tree: PlanTree, selected: TreeVertex) -> tuple[ControlInput, TreeVertex | None]:
    if selected is tree.root:
        return ZERO_CONTROL, None
    first = tree.path_to(selected)[1]
    return first.edge.controls[0], first


def grow_cycle(
    tree: PlanTree,
    obstacles: ObstacleField,
    goal: GoalRegion,
    params: PlannerParams,
    rng: np.random.Generator,
    started: float | None = None,
) -> CycleResult:
    """Grow under the cycle budget, then pick the control to execute.

    In simulation mode growth stops after ``node_budget`` insertions or
    ``max_attempts`` attempts. With ``params.deadline`` set, no attempt
    starts after ``started + deadline`` (wall clock).
    """
    t_start = time.perf_counter() if started is None else started
    inserted = attempts = 0
    if params.deadline is not None:
        while time.perf_counter() < t_start + params.deadline:
            attempts += 1
            inserted += grow_once(tree, obstacles, goal, params, rng) is not None
    else:
        while inserted < params.node_budget and attempts < params.max_attempts:
            attempts += 1
            inserted += grow_once(tree, obstacles, goal, params, rng) is not None
    selected = select_vertex(tree)
    u, first = extract_control(tree, selected)
    return CycleResult(u, selected, first, inserted, attempts, time.perf_counter() - t_start)


# --- re-rooting ------------------------------------------------------------


def _same_state(a: RobotState, b: RobotState) -> bool:
    return (
        abs(a.x - b.x) <= REPLAY_TOL
        and abs(a.y - b.y) <= REPLAY_TOL
        and abs(angle_diff(a.theta, b.theta)) <= REPLAY_TOL
    )


def reroot(
    tree: PlanTree,
    first_edge: TreeVertex | None,
    executed: Sequence[ControlInput],
    executed_state: RobotState,
    executed_time: float,
) -> PlanTree:
    """Move the root along the committed edge and drop every other branch.

    ``executed`` are the controls actually applied (a prefix of the edge).
    The followed branch survives only if the edge's stored state after
    those controls matches ``executed_state``; otherwise a fresh tree is
    started. A partially executed edge is trimmed so the kept child hangs
    off the new root with its original timestamp.
    """
    fresh = PlanTree(executed_state, executed_time)
    if first_edge is None or not executed:
        return fresh
    k = len(executed)
    edge = first_edge.edge
    if k > len(edge.controls) or tuple(executed) != edge.controls[:k]:
        return fresh
    stored = edge.states[k]
    step = (first_edge.time - tree.root.time) / len(edge.controls)
    if not _same_state(stored, executed_state) or abs(executed_time - (tree.root.time + k * step)) > 1e-9:
        return fresh
    if k == len(edge.controls):
        new_root = first_edge
        new_root.parent, new_root.edge = None, None
        tree.root = new_root
    else:
        new_root = TreeVertex(executed_state, math.inf, executed_time, order=next(tree._counter))
        first_edge.parent = new_root
        first_edge.edge = TreeEdge(edge.controls[k:], (executed_state,) + edge.states[k + 1:])
        new_root.children = [first_edge]
        tree.root = new_root
    tree._rebuild()
    tree.refresh_best()
    return tree


def revalidate(tree: PlanTree, obstacles: ObstacleField, goal: GoalRegion, params: PlannerParams) -> int:
    """Prune branches that are unsafe under a new prediction and refresh costs.

    Every stored state (edge intermediates and vertices) must keep a
    non-negative barrier value at its own time. Returns the number of
    vertices removed.
    """
    before = len(tree)
    ell, dt = params.ell, params.T_s
    edged = [v for v in tree.vertices if v.edge is not None]
    if edged:
        lens = np.array([len(v.edge.controls) for v in edged])
        ends = np.cumsum(lens)
        starts = ends - lens
        pts = np.concatenate([v.edge.lookahead(ell) for v in edged])
        step = np.arange(ends[-1]) - np.repeat(starts, lens) + 1
        ts = np.repeat([v.parent.time for v in edged], lens) + step * dt
        h = obstacles.min_barrier_batch(pts[:, 0], pts[:, 1], ts, params.r_r, ell, params.cutoff)
        bad = np.minimum.reduceat(h, starts) < 0
        if bad.any():
            dead = set()
            for i in np.flatnonzero(bad):
                if edged[i] not in dead:
                    dead.update(tree.subtree(edged[i]))
            for v in dead:
                if v.parent is not None and v.parent not in dead:
                    v.parent.children.remove(v)
            tree._rebuild()
        # the barrier at each surviving vertex is the last value on its edge
        h_end = h[ends - 1]
        xy = np.array([v.state[:2] for v in edged])
        dist = np.maximum(0.0, np.hypot(xy[:, 0] - goal.center[0], xy[:, 1] - goal.center[1]) - goal.radius)
        h_cost = np.maximum(h_end, params.h_floor)
        if params.h_cap is not None:
            h_cost = np.minimum(h_cost, params.h_cap)
        cost = params.a1 * dist / (params.a2 * h_cost)
        cost[dist == 0.0] = 0.0
        for v, c, dropped in zip(edged, cost.tolist(), bad.tolist()):
            if not dropped:
                v.cost = c
    root = tree.root
    root.cost = vertex_cost(root.state, root.time, goal, obstacles, params)
    tree.refresh_best()
    return before - len(tree)


# --- stateful driver -------------------------------------------------------


def build_field(
    static: Iterable,
    discs: Mapping[Hashable, Sequence[PredictedDisc]],
    t0: float,
    params: PlannerParams,
) -> ObstacleField:
    """Obstacle snapshot for one cycle: static geometry plus padded predictions."""
    statics = list(static)
    ids = list(discs)
    n_steps = params.N_o + 1
    centers = np.zeros((len(ids), n_steps, 2))
    radii = np.zeros((len(ids), n_steps))
    valid = np.zeros((len(ids), n_steps), dtype=bool)
    pad = params.disc_padding
    for i, aid in enumerate(ids):
        for k, d in enumerate(discs[aid][:n_steps]):
            centers[i, k] = d.center
            radii[i, k] = d.radius + pad
            valid[i, k] = not d.vacuous
    return ObstacleField(
        [o for o in statics if isinstance(o, DiscObstacle)],
        [o for o in statics if isinstance(o, HalfPlaneObstacle)],
        [o for o in statics if isinstance(o, SegmentWall)],
        ids,
        centers,
        radii,
        valid,
        t0,
        params.T_s,
    )


class TreePlanner:
    """Planning loop state: observed tracklets, the tree and the random streams.

    Call :meth:`observe` every step, :meth:`plan_cycle` at the start of each
    cycle and :meth:`advance` once the committed controls have been applied.
    """

    def __init__(
        self,
        goal: GoalRegion,
        static_obstacles: Iterable,
        params: PlannerParams,
        human_goals: Sequence[tuple[float, float]] = (),
        grid: GridSpec | None = None,
    ):
        self.goal = goal
        self.static = list(static_obstacles)
        self.params = params
        self.predictor = PredictorConfig(
            horizon=params.N_o,
            samples=params.samples,
            goals=tuple(tuple(g) for g in human_goals),
            grid=grid or GridSpec(cell_size=params.cell_size),
            dt=params.T_s,
        )
        plan_seq, pred_seq = np.random.SeedSequence(params.seed).spawn(2)
        self.rng = np.random.default_rng(plan_seq)
        self.pred_rng = np.random.default_rng(pred_seq)
        self.store = TrackletStore()
        self.tree: PlanTree | None = None
        self.field: ObstacleField | None = None
        self.discs: dict[Hashable, list[PredictedDisc]] = {}

    def observe(self, observations: Iterable[tuple[Hashable, float, Sequence[float]]]) -> None:
        self.store.ingest_many(observations)

    def plan_cycle(self, now: float, robot: RobotState) -> CycleResult:
        started = time.perf_counter()
        p = self.params
        self.discs = predict_discs(self.store, self.predictor, p.p_o, self.pred_rng) if len(self.store) else {}
        self.field = build_field(self.static, self.discs, now, p)
        tree = self.tree
        if tree is None or abs(tree.root.time - now) > 1e-9 or not _same_state(tree.root.state, robot):
            tree = self.tree = PlanTree(robot, now)
        revalidate(tree, self.field, self.goal, p)
        return grow_cycle(tree, self.field, self.goal, p, self.rng, started)

    def advance(self, result: CycleResult, executed: Sequence[ControlInput], state: RobotState, now: float) -> None:
        self.tree = reroot(self.tree, result.first_edge, executed, state, now)
