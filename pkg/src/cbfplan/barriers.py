"""Obstacle representations, barrier values and linear CBF constraint rows.

Every barrier is evaluated on the look-ahead point (see
:func:`cbfplan.geometry.to_transformed`) and padded by ``ell + robot_radius``
so that keeping the point outside the inflated set keeps the whole robot disc
outside the obstacle. The class-K function is linear, ``alpha(h) = beta * h``,
and the unicycle has no drift, so each row reads ``a . u + beta * h >= 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .geometry import TransformedState


class ObstacleKind(enum.Enum):
    STATIC = "static"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class DiscObstacle:
    center: tuple[float, float]
    radius: float
    kind: ObstacleKind = ObstacleKind.STATIC
    agent_id: Hashable | None = None
    timestamp: float | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"disc radius must be >= 0, got {self.radius}")
        if self.kind is ObstacleKind.PREDICTED and (self.agent_id is None or self.timestamp is None):
            raise ValueError("predicted discs need an agent_id and a timestamp")


@dataclass(frozen=True)
class HalfPlaneObstacle:
    """Wall whose free side satisfies ``normal . p - offset >= 0``."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        n = math.hypot(*self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"half-plane normal must be unit length, got |n| = {n}")


@dataclass(frozen=True)
class SegmentWall:
    """Finite wall segment; the robot keeps its distance from every point on it."""

    start: tuple[float, float]
    end: tuple[float, float]

    def closest_point(self, p: Sequence[float]) -> tuple[float, float]:
        ax, ay = self.start
        dx, dy = self.end[0] - ax, self.end[1] - ay
        ll = dx * dx + dy * dy
        s = 0.0 if ll == 0 else min(1.0, max(0.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / ll))
        return (ax + s * dx, ay + s * dy)


Obstacle = DiscObstacle | HalfPlaneObstacle | SegmentWall


@dataclass(frozen=True)
class SafetyConstraint:
    """Row ``a . u + b >= 0`` on ``u = (v, omega)``."""

    a: tuple[float, float]
    b: float
    h_value: float
    source: Any = None

    def slack(self, v: float, omega: float) -> float:
        return self.a[0] * v + self.a[1] * omega + self.b


# --- scalar barriers -------------------------------------------------------


def barrier_value_disc(state: TransformedState, obs: DiscObstacle, robot_radius: float) -> float:
    dx = state.x_t - obs.center[0]
    dy = state.y_t - obs.center[1]
    r = obs.radius + state.ell + robot_radius
    return dx * dx + dy * dy - r * r


def _point_row(state: TransformedState, dx: float, dy: float, h: float, beta: float, source) -> SafetyConstraint:
    c, s, ell = math.cos(state.theta), math.sin(state.theta), state.ell
    a = (2.0 * (dx * c + dy * s), 2.0 * ell * (-dx * s + dy * c))
    return SafetyConstraint(a, beta * h, h, source)


def constraint_row_disc(state: TransformedState, obs: DiscObstacle, beta: float, robot_radius: float) -> SafetyConstraint:
    if not beta > 0:
        raise ValueError("beta must be positive")
    h = barrier_value_disc(state, obs, robot_radius)
    return _point_row(state, state.x_t - obs.center[0], state.y_t - obs.center[1], h, beta, obs)


def barrier_value_halfplane(state: TransformedState, wall: HalfPlaneObstacle, robot_radius: float) -> float:
    n1, n2 = wall.normal
    return n1 * state.x_t + n2 * state.y_t - wall.offset - (state.ell + robot_radius)


def constraint_row_halfplane(
    state: TransformedState, wall: HalfPlaneObstacle, beta: float, robot_radius: float
) -> SafetyConstraint:
    if not beta > 0:
        raise ValueError("beta must be positive")
    h = barrier_value_halfplane(state, wall, robot_radius)
    n1, n2 = wall.normal
    c, s, ell = math.cos(state.theta), math.sin(state.theta), state.ell
    return SafetyConstraint((n1 * c + n2 * s, ell * (-n1 * s + n2 * c)), beta * h, h, wall)


def barrier_value_segment(state: TransformedState, wall: SegmentWall, robot_radius: float) -> float:
    qx, qy = wall.closest_point((state.x_t, state.y_t))
    r = state.ell + robot_radius
    return (state.x_t - qx) ** 2 + (state.y_t - qy) ** 2 - r * r


def constraint_row_segment(
    state: TransformedState, wall: SegmentWall, beta: float, robot_radius: float
) -> SafetyConstraint:
    # squared distance to a convex set has gradient 2 (p - proj(p))
    if not beta > 0:
        raise ValueError("beta must be positive")
    qx, qy = wall.closest_point((state.x_t, state.y_t))
    h = barrier_value_segment(state, wall, robot_radius)
    return _point_row(state, state.x_t - qx, state.y_t - qy, h, beta, wall)


def barrier_value(state: TransformedState, obs: Obstacle, robot_radius: float) -> float:
    if isinstance(obs, DiscObstacle):
        return barrier_value_disc(state, obs, robot_radius)
    if isinstance(obs, HalfPlaneObstacle):
        return barrier_value_halfplane(state, obs, robot_radius)
    return barrier_value_segment(state, obs, robot_radius)


def constraint_row(state: TransformedState, obs: Obstacle, beta: float, robot_radius: float) -> SafetyConstraint:
    if isinstance(obs, DiscObstacle):
        return constraint_row_disc(state, obs, beta, robot_radius)
    if isinstance(obs, HalfPlaneObstacle):
        return constraint_row_halfplane(state, obs, beta, robot_radius)
    return constraint_row_segment(state, obs, beta, robot_radius)


def obstacle_distance(state: TransformedState, obs: Obstacle) -> float:
    """Planar distance used by the constraint cutoff (centre for discs)."""
    if isinstance(obs, DiscObstacle):
        return math.hypot(state.x_t - obs.center[0], state.y_t - obs.center[1])
    if isinstance(obs, HalfPlaneObstacle):
        return abs(obs.normal[0] * state.x_t + obs.normal[1] * state.y_t - obs.offset)
    qx, qy = obs.closest_point((state.x_t, state.y_t))
    return math.hypot(state.x_t - qx, state.y_t - qy)


def select_prediction(discs: Sequence[DiscObstacle], plan_time: float) -> DiscObstacle:
    """Disc of a time-ordered prediction matching ``plan_time``.

    Times past the horizon use the last disc, times before it the first.
    """
    best = discs[0]
    for d in discs:
        if d.timestamp <= plan_time + 1e-9:
            best = d
        else:
            break
    return best


def active_constraints(
    state: TransformedState,
    obstacles: "Iterable[Obstacle] | ObstacleField",
    plan_time: float,
    cutoff: float = 5.0,
    beta: float = 100.0,
    robot_radius: float = 0.25,
) -> list[SafetyConstraint]:
    """CBF rows for every obstacle within ``cutoff`` of the look-ahead point.

    Predicted discs are grouped by agent and the one aligned with
    ``plan_time`` is used.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if isinstance(obstacles, ObstacleField):
        obstacles = obstacles.obstacles_at(plan_time)
    else:
        fixed, tracks = [], {}
        for obs in obstacles:
            if isinstance(obs, DiscObstacle) and obs.kind is ObstacleKind.PREDICTED:
                tracks.setdefault(obs.agent_id, []).append(obs)
            else:
                fixed.append(obs)
        for discs in tracks.values():
            discs.sort(key=lambda d: d.timestamp)
            fixed.append(select_prediction(discs, plan_time))
        obstacles = fixed
    return [
        constraint_row(state, obs, beta, robot_radius)
        for obs in obstacles
        if obstacle_distance(state, obs) <= cutoff
    ]


# --- vectorised snapshot ---------------------------------------------------


@dataclass
class ObstacleField:
    """Everything the steering QP must avoid during one planning cycle.

    Static geometry is stored as arrays; predicted agents as a
    ``(n_agents, n_steps)`` table of discs sampled every ``dt`` from ``t0``.
    Vacuous predictions (``valid == False``) never produce constraints.
    """

    discs: list[DiscObstacle] = field(default_factory=list)
    halfplanes: list[HalfPlaneObstacle] = field(default_factory=list)
    segments: list[SegmentWall] = field(default_factory=list)
    agent_ids: list[Hashable] = field(default_factory=list)
    pred_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 1, 2)))
    pred_radii: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    pred_valid: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=bool))
    t0: float = 0.0
    dt: float = 0.1

    def __post_init__(self):
        self._disc_c = np.array([d.center for d in self.discs], dtype=float).reshape(-1, 2)
        self._disc_r = np.array([d.radius for d in self.discs], dtype=float)
        self._hp_n = np.array([w.normal for w in self.halfplanes], dtype=float).reshape(-1, 2)
        self._hp_o = np.array([w.offset for w in self.halfplanes], dtype=float)
        self._seg_a = np.array([s.start for s in self.segments], dtype=float).reshape(-1, 2)
        d = np.array([s.end for s in self.segments], dtype=float).reshape(-1, 2) - self._seg_a
        self._seg_d = d
        ll = np.einsum("ij,ij->i", d, d)
        self._seg_inv = np.where(ll > 0, 1.0 / np.where(ll > 0, ll, 1.0), 0.0)
        self.pred_centers = np.asarray(self.pred_centers, dtype=float)
        self.pred_radii = np.asarray(self.pred_radii, dtype=float)
        self.pred_valid = np.asarray(self.pred_valid, dtype=bool)
        self._cache: dict[int, list] = {}
        self._static_pts = [(float(x), float(y), float(r)) for (x, y), r in zip(self._disc_c, self._disc_r)]
        self._seg_list = [
            (float(a[0]), float(a[1]), float(u[0]), float(u[1]), float(i))
            for a, u, i in zip(self._seg_a, self._seg_d, self._seg_inv)
        ]
        self._hp_list = [(float(n[0]), float(n[1]), float(o)) for n, o in zip(self._hp_n, self._hp_o)]

    @classmethod
    def from_obstacles(cls, obstacles: Iterable[Obstacle], dt: float = 0.1) -> "ObstacleField":
        """Build a field from loose obstacle objects (predicted discs grouped by agent)."""
        discs, hps, segs, tracks = [], [], [], {}
        for obs in obstacles:
            if isinstance(obs, DiscObstacle):
                if obs.kind is ObstacleKind.PREDICTED:
                    tracks.setdefault(obs.agent_id, []).append(obs)
                else:
                    discs.append(obs)
            elif isinstance(obs, HalfPlaneObstacle):
                hps.append(obs)
            else:
                segs.append(obs)
        if not tracks:
            return cls(discs, hps, segs, dt=dt)
        t0 = min(d.timestamp for ds in tracks.values() for d in ds)
        n_steps = 1 + max(int(round((d.timestamp - t0) / dt)) for ds in tracks.values() for d in ds)
        ids = list(tracks)
        centers = np.zeros((len(ids), n_steps, 2))
        radii = np.zeros((len(ids), n_steps))
        valid = np.zeros((len(ids), n_steps), dtype=bool)
        for i, aid in enumerate(ids):
            ds = sorted(tracks[aid], key=lambda d: d.timestamp)
            for k in range(n_steps):
                d = select_prediction(ds, t0 + k * dt)
                centers[i, k] = d.center
                radii[i, k] = d.radius
                valid[i, k] = True
        return cls(discs, hps, segs, ids, centers, radii, valid, t0, dt)

    @property
    def n_steps(self) -> int:
        return self.pred_radii.shape[1]

    def step_index(self, plan_time: float) -> int:
        k = int(round((plan_time - self.t0) / self.dt))
        return min(max(k, 0), self.n_steps - 1)

    def obstacles_at(self, plan_time: float) -> list[Obstacle]:
        out: list[Obstacle] = [*self.discs, *self.halfplanes, *self.segments]
        k = self.step_index(plan_time)
        for i, aid in enumerate(self.agent_ids):
            if self.pred_valid[i, k]:
                out.append(
                    DiscObstacle(
                        tuple(self.pred_centers[i, k]),
                        float(self.pred_radii[i, k]),
                        ObstacleKind.PREDICTED,
                        aid,
                        self.t0 + k * self.dt,
                    )
                )
        return out

    def _point_obstacles(self, k: int) -> list[tuple[float, float, float]]:
        """Static and valid predicted discs at step ``k`` as ``(cx, cy, r)``."""
        hit = self._cache.get(k)
        if hit is None:
            hit = list(self._static_pts)
            for i in range(len(self.agent_ids)):
                if self.pred_valid[i, k]:
                    cx, cy = self.pred_centers[i, k]
                    hit.append((float(cx), float(cy), float(self.pred_radii[i, k])))
            self._cache[k] = hit
        return hit

    def row_list(
        self,
        state: TransformedState,
        plan_time: float,
        beta: float,
        robot_radius: float,
        cutoff: float = math.inf,
    ) -> list[tuple[float, float, float, float]]:
        """Constraint rows ``(a_v, a_w, b, h)`` with ``a_v v + a_w w + b >= 0``.

        Plain Python on purpose: the obstacle count per query is small and
        this sits inside the steering loop.
        """
        px, py, ell = state.x_t, state.y_t, state.ell
        c, s = math.cos(state.theta), math.sin(state.theta)
        pad = ell + robot_radius
        c2 = cutoff * cutoff
        out = []
        k = self.step_index(plan_time) if self.agent_ids else 0
        for cx, cy, r in self._point_obstacles(k):
            dx, dy = px - cx, py - cy
            d2 = dx * dx + dy * dy
            if d2 <= c2:
                h = d2 - (r + pad) ** 2
                out.append((2.0 * (dx * c + dy * s), 2.0 * ell * (dy * c - dx * s), beta * h, h))
        pad2 = pad * pad
        for ax, ay, ux, uy, inv in self._seg_list:
            t = ((px - ax) * ux + (py - ay) * uy) * inv
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            dx, dy = px - (ax + t * ux), py - (ay + t * uy)
            d2 = dx * dx + dy * dy
            if d2 <= c2:
                h = d2 - pad2
                out.append((2.0 * (dx * c + dy * s), 2.0 * ell * (dy * c - dx * s), beta * h, h))
        for n1, n2, off in self._hp_list:
            signed = n1 * px + n2 * py - off
            if abs(signed) <= cutoff:
                h = signed - pad
                out.append((n1 * c + n2 * s, ell * (n2 * c - n1 * s), beta * h, h))
        return out

    def rows(
        self,
        state: TransformedState,
        plan_time: float,
        beta: float,
        robot_radius: float,
        cutoff: float = math.inf,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Array form of :meth:`row_list`: ``(A, b, h)`` with ``A @ u + b >= 0``."""
        r = self.row_list(state, plan_time, beta, robot_radius, cutoff)
        if not r:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
        arr = np.array(r, dtype=float)
        return arr[:, :2].copy(), arr[:, 2].copy(), arr[:, 3].copy()

    def min_barrier(self, state: TransformedState, plan_time: float, robot_radius: float, cutoff: float = math.inf) -> float:
        """Smallest barrier value among obstacles within the cutoff (inf if none)."""
        r = self.row_list(state, plan_time, 1.0, robot_radius, cutoff)
        return min(row[3] for row in r) if r else math.inf

    def min_barrier_batch(
        self, px: np.ndarray, py: np.ndarray, times: np.ndarray, robot_radius: float, ell: float, cutoff: float = math.inf
    ) -> np.ndarray:
        """Smallest barrier value for many look-ahead points at their own plan times."""
        px, py = np.asarray(px, dtype=float), np.asarray(py, dtype=float)
        pad = ell + robot_radius
        out = np.full(px.shape, np.inf)
        c2 = cutoff * cutoff

        def fold(dx, dy, rad):
            d2 = dx * dx + dy * dy
            h = np.where(d2 <= c2, d2 - (rad + pad) ** 2, np.inf)
            np.minimum(out, h.min(axis=-1), out=out)

        if len(self.discs):
            fold(px[:, None] - self._disc_c[:, 0], py[:, None] - self._disc_c[:, 1], self._disc_r)
        if len(self.segments):
            t = ((px[:, None] - self._seg_a[:, 0]) * self._seg_d[:, 0] + (py[:, None] - self._seg_a[:, 1]) * self._seg_d[:, 1]) * self._seg_inv
            t = np.clip(t, 0.0, 1.0)
            fold(px[:, None] - self._seg_a[:, 0] - t * self._seg_d[:, 0], py[:, None] - self._seg_a[:, 1] - t * self._seg_d[:, 1], 0.0)
        if len(self.halfplanes):
            signed = px[:, None] * self._hp_n[:, 0] + py[:, None] * self._hp_n[:, 1] - self._hp_o
            h = np.where(np.abs(signed) <= cutoff, signed - pad, np.inf)
            np.minimum(out, h.min(axis=-1), out=out)
        if len(self.agent_ids) and px.size:
            k = np.clip(np.round((np.asarray(times, dtype=float) - self.t0) / self.dt).astype(int), 0, self.n_steps - 1)
            cx = self.pred_centers[:, k, 0].T  # (M, n_agents)
            cy = self.pred_centers[:, k, 1].T
            rad = np.where(self.pred_valid[:, k].T, self.pred_radii[:, k].T, -np.inf)
            dx, dy = px[:, None] - cx, py[:, None] - cy
            d2 = dx * dx + dy * dy
            h = np.where((d2 <= c2) & np.isfinite(rad), d2 - (np.where(np.isfinite(rad), rad, 0.0) + pad) ** 2, np.inf)
            np.minimum(out, h.min(axis=-1), out=out)
        return out
