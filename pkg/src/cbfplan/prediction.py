"""Pedestrian tracklets, sampled occupancy prediction and level-set discs.

The predictor is a goal-directed stochastic rollout. Each of ``K`` samples
picks a goal (favouring goals in the direction the agent is walking), then
repeatedly chooses an orientation/velocity action: the heading change from a
softmax over the rate of progress toward that goal, the speed multiple
uniformly. It then advances with the deterministic kinematic transition. Visited cells are counted per step and divided by
``K``. Work is ``O(K * (|goals| + N_o * |actions|))`` per agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .barriers import DiscObstacle, ObstacleKind


class ObservationError(ValueError):
    pass


@dataclass
class Tracklet:
    agent_id: Hashable
    times: list[float] = field(default_factory=list)
    positions: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def last_time(self) -> float:
        return self.times[-1]

    @property
    def last_position(self) -> tuple[float, float]:
        return self.positions[-1]

    def velocity(self) -> tuple[float, float]:
        """Finite-difference velocity from the last two samples (zero with one)."""
        if len(self.times) < 2:
            return (0.0, 0.0)
        dt = self.times[-1] - self.times[-2]
        (x0, y0), (x1, y1) = self.positions[-2], self.positions[-1]
        return ((x1 - x0) / dt, (y1 - y0) / dt)


class TrackletStore:
    """Observed trajectories keyed by agent id, in first-seen order."""

    def __init__(self):
        self.tracklets: dict[Hashable, Tracklet] = {}

    def __len__(self) -> int:
        return len(self.tracklets)

    def __contains__(self, agent_id) -> bool:
        return agent_id in self.tracklets

    def __getitem__(self, agent_id) -> Tracklet:
        return self.tracklets[agent_id]

    def ingest_observation(self, agent_id: Hashable, time: float, position: Sequence[float]) -> "TrackletStore":
        tr = self.tracklets.get(agent_id)
        if tr is None:
            tr = self.tracklets[agent_id] = Tracklet(agent_id)
        elif time <= tr.last_time:
            raise ObservationError(
                f"agent {agent_id!r}: observation at t={time} is not after t={tr.last_time}"
            )
        tr.times.append(float(time))
        tr.positions.append((float(position[0]), float(position[1])))
        return self

    def ingest_many(self, observations: Iterable[tuple[Hashable, float, Sequence[float]]]) -> "TrackletStore":
        for agent_id, time, pos in observations:
            self.ingest_observation(agent_id, time, pos)
        return self


@dataclass(frozen=True)
class GridSpec:
    """Global cell lattice; maps are windows aligned to it.

    ``bounds`` (xmin, ymin, xmax, ymax) optionally limits the mapped area;
    probability mass leaving it is dropped.
    """

    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 0.1
    bounds: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class ActionSet:
    """Heading changes (rad) crossed with multiples of the observed speed."""

    heading_offsets: tuple[float, ...] = tuple(math.radians(d) for d in (-45.0, -22.5, 0.0, 22.5, 45.0))
    speed_factors: tuple[float, ...] = (0.75, 1.0, 1.25)

    def __post_init__(self):
        if not self.heading_offsets or not self.speed_factors:
            raise ValueError("action set must be non-empty")

    def __len__(self) -> int:
        return len(self.heading_offsets) * len(self.speed_factors)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        d, s = np.meshgrid(self.heading_offsets, self.speed_factors, indexing="ij")
        return d.ravel(), s.ravel()


@dataclass(frozen=True)
class PredictorConfig:
    horizon: int = 10  # N_o
    samples: int = 256  # K
    action_set: ActionSet = field(default_factory=ActionSet)
    goals: tuple[tuple[float, float], ...] = ()
    grid: GridSpec = field(default_factory=GridSpec)
    dt: float = 0.1
    rationality: float = 20.0  # softmax inverse temperature on progress
    goal_concentration: float = 4.0  # goal prior ~ exp(kappa * cos(angle))
    still_speed: float = 0.05  # observed speeds below this are treated as standing [m/s]
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1 or self.horizon < 1:
            raise ValueError("samples and horizon must be >= 1")
        if not self.dt > 0 or not self.grid.cell_size > 0:
            raise ValueError("dt and cell size must be positive")


@dataclass
class OccupancyMap:
    """Probability of occupancy per cell; ``cells[row, col]`` with rows along y."""

    origin: tuple[float, float]
    cell_size: float
    cells: np.ndarray
    timestamp: float
    agent_id: Hashable
    step: int = 0

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        cs = self.cell_size
        return (float(self.origin[0] + (col + 0.5) * cs), float(self.origin[1] + (row + 0.5) * cs))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.cells.shape
        cs = self.cell_size
        xs = self.origin[0] + (np.arange(nx) + 0.5) * cs
        ys = self.origin[1] + (np.arange(ny) + 0.5) * cs
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class PredictedDisc:
    center: tuple[float, float]
    radius: float
    timestamp: float
    agent_id: Hashable
    p_o: float
    vacuous: bool = False

    def to_obstacle(self, padding: float = 0.0) -> DiscObstacle:
        return DiscObstacle(self.center, self.radius + padding, ObstacleKind.PREDICTED, self.agent_id, self.timestamp)


def extract_disc(occ: OccupancyMap, p_o: float) -> PredictedDisc:
    """Disc centred on the most likely cell covering every cell with p >= p_o.

    Ties for the maximum go to the lowest row-major index. A map with no
    cell reaching ``p_o`` yields a ``vacuous`` disc of radius 0 (at the map
    origin when the map is all zero).
    """
    if not 0 < p_o <= 1:
        raise ValueError("p_o must lie in (0, 1]")
    cells = occ.cells
    if cells.size == 0 or not np.any(cells > 0):
        return PredictedDisc(tuple(occ.origin), 0.0, occ.timestamp, occ.agent_id, p_o, vacuous=True)
    flat = int(np.argmax(cells))
    row, col = divmod(flat, cells.shape[1])
    center = occ.cell_center(row, col)
    rows, cols = np.nonzero(cells >= p_o)
    if rows.size == 0:
        return PredictedDisc(center, 0.0, occ.timestamp, occ.agent_id, p_o, vacuous=True)
    dist = np.hypot(cols - col, rows - row) * occ.cell_size
    return PredictedDisc(center, float(dist.max()), occ.timestamp, occ.agent_id, p_o)


def _goal_choice(pos, vel, goals, samples, kappa, rng):
    """Sample one goal index per trajectory, weighted by heading alignment."""
    n = len(goals)
    speed = math.hypot(*vel)
    if n == 1:
        return np.zeros(samples, dtype=int)
    g = np.asarray(goals, dtype=float)
    d = g - np.asarray(pos)
    dn = np.hypot(d[:, 0], d[:, 1])
    if speed == 0:
        logit = np.zeros(n)
    else:
        cos = np.where(dn > 0, (d @ np.asarray(vel)) / (np.maximum(dn, 1e-12) * speed), 1.0)
        logit = kappa * cos
    w = np.exp(logit - logit.max())
    return rng.choice(n, size=samples, p=w / w.sum())


def _rollout(tracks: list[Tracklet], config: PredictorConfig, rng: np.random.Generator) -> np.ndarray:
    """Sampled positions, shape (n_agents, horizon + 1, K, 2); step 0 is the last observation."""
    K, N, dt = config.samples, config.horizon, config.dt
    n = len(tracks)
    P = np.empty((n, K, 2))
    TH = np.empty((n, K))
    S = np.empty(n)
    GOAL = np.empty((n, K, 2))
    for i, tr in enumerate(tracks):
        pos = tr.last_position
        vel = tr.velocity()
        speed = math.hypot(*vel)
        if speed < config.still_speed:
            speed, vel = 0.0, (0.0, 0.0)
        heading = math.atan2(vel[1], vel[0]) if speed > 0 else 0.0
        goals = config.goals or ((pos[0] + 100.0 * math.cos(heading), pos[1] + 100.0 * math.sin(heading)),)
        idx = _goal_choice(pos, vel, goals, K, config.goal_concentration, rng)
        GOAL[i] = np.asarray(goals, dtype=float)[idx]
        P[i] = pos
        TH[i] = heading
        S[i] = speed
    out = np.empty((n, N + 1, K, 2))
    out[:, 0] = P
    moving = np.flatnonzero(S > 0)
    if not moving.size:
        out[:, 1:] = P[:, None]
        return out
    out[:, 1:] = P[:, None]
    P, TH, GOAL, S = P[moving], TH[moving], GOAL[moving], S[moving]
    offsets = np.asarray(config.action_set.heading_offsets)
    factors = np.asarray(config.action_set.speed_factors)
    co, so = np.cos(offsets), np.sin(offsets)
    for k in range(1, N + 1):
        # score = rate of progress toward the goal, cos(heading - goal bearing);
        # it does not depend on speed, so speed factors are drawn uniformly
        gb = np.arctan2(GOAL[..., 1] - P[..., 1], GOAL[..., 0] - P[..., 0])
        rel = TH - gb
        cr, sr = np.cos(rel), np.sin(rel)
        score = cr[..., None] * co - sr[..., None] * so  # cos(rel + offset)
        w = np.exp(config.rationality * (score - 1.0))
        cum = np.cumsum(w, axis=2)
        pick = (cum < rng.random(TH.shape)[..., None] * cum[..., -1:]).sum(axis=2)
        TH = TH + offsets[pick]
        step = S[:, None] * factors[rng.integers(len(factors), size=TH.shape)] * dt
        P = P + step[..., None] * np.stack([np.cos(TH), np.sin(TH)], axis=-1)
        out[moving, k] = P
    return out


def _rasterize(samples: np.ndarray, grid: GridSpec, tr: Tracklet, dt: float, K: int) -> list[OccupancyMap]:
    """Per-step occupancy maps over a lattice-aligned window around the samples."""
    cs = grid.cell_size
    ox, oy = grid.origin
    ij = np.floor((samples - np.array([ox, oy])) / cs).astype(np.int64)  # (N+1, K, 2)
    lo = ij.reshape(-1, 2).min(axis=0)
    hi = ij.reshape(-1, 2).max(axis=0)
    if grid.bounds is not None:
        bx0, by0, bx1, by1 = grid.bounds
        blo = np.floor((np.array([bx0, by0]) - [ox, oy]) / cs).astype(np.int64)
        bhi = np.ceil((np.array([bx1, by1]) - [ox, oy]) / cs).astype(np.int64) - 1
        lo, hi = np.maximum(lo, blo), np.minimum(hi, bhi)
    nx, ny = int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1)
    origin = (ox + lo[0] * cs, oy + lo[1] * cs)
    maps = []
    for k in range(samples.shape[0]):
        if nx <= 0 or ny <= 0:
            cells = np.zeros((0, 0))
        else:
            c = ij[k] - lo
            inside = (c[:, 0] >= 0) & (c[:, 0] < nx) & (c[:, 1] >= 0) & (c[:, 1] < ny)
            flat = c[inside, 1] * nx + c[inside, 0]
            cells = (np.bincount(flat, minlength=nx * ny) / K).reshape(ny, nx)
        maps.append(OccupancyMap(origin, cs, cells, tr.last_time + k * dt, tr.agent_id, k))
    return maps


def predict(
    store: TrackletStore, config: PredictorConfig, rng: np.random.Generator | None = None
) -> dict[Hashable, list[OccupancyMap]]:
    """Occupancy maps for steps 0..horizon of every tracked agent.

    Step ``k`` is stamped ``last_observation_time + k * dt``. An agent with a
    single observation has no velocity estimate and is predicted standing.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    tracks = [tr for tr in store.tracklets.values() if len(tr)]
    if not tracks:
        return {}
    samples = _rollout(tracks, config, rng)
    return {
        tr.agent_id: _rasterize(samples[i], config.grid, tr, config.dt, config.samples)
        for i, tr in enumerate(tracks)
    }


def predict_discs(
    store: TrackletStore, config: PredictorConfig, p_o: float, rng: np.random.Generator | None = None
) -> dict[Hashable, list[PredictedDisc]]:
    maps = predict(store, config, rng)
    return {aid: [extract_disc(m, p_o) for m in ms] for aid, ms in maps.items()}
