"""Per-step safety QP and the multi-step steering that produces a tree edge.

The QP has two decision variables, so it is solved exactly by enumerating
candidate active sets of size 0, 1 and 2 over the CBF rows and the four box
edges, and keeping the feasible candidate of least cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barriers import ObstacleField, SafetyConstraint
from .geometry import ControlInput, RobotState, integrate_unicycle, to_transformed
from .params import PlannerParams


@dataclass(frozen=True)
class Box:
    v_lo: float
    v_hi: float
    w_lo: float
    w_hi: float

    def __post_init__(self):
        if not (self.v_lo <= self.v_hi and self.w_lo <= self.w_hi):
            raise ValueError("empty control box")

    @classmethod
    def from_params(cls, p: PlannerParams) -> "Box":
        return cls(p.v_min, p.v_max, -p.omega_max, p.omega_max)

    def clamp(self, u: Sequence[float]) -> ControlInput:
        return ControlInput(min(max(u[0], self.v_lo), self.v_hi), min(max(u[1], self.w_lo), self.w_hi))


@dataclass
class QpProblem:
    """min (u - u_ref)' H (u - u_ref)  s.t.  A u + b >= 0,  u in box."""

    u_ref: ControlInput
    H: tuple[float, float]
    A: np.ndarray
    b: np.ndarray
    box: Box

    def __post_init__(self):
        if any(h < 0 for h in self.H):
            raise ValueError("H must be non-negative")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, 2)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(self.A) != len(self.b):
            raise ValueError("A and b disagree in length")

    @classmethod
    def from_rows(cls, u_ref, H, rows: Sequence[SafetyConstraint], box: Box) -> "QpProblem":
        A = np.array([r.a for r in rows], dtype=float).reshape(-1, 2)
        b = np.array([r.b for r in rows], dtype=float)
        return cls(ControlInput(*u_ref), tuple(H), A, b, box)

    def cost(self, u: Sequence[float]) -> float:
        dv, dw = u[0] - self.u_ref[0], u[1] - self.u_ref[1]
        return self.H[0] * dv * dv + self.H[1] * dw * dw

    def all_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """CBF rows followed by the four box edges, as ``G u + g >= 0``."""
        bx = self.box
        G = np.vstack([self.A, [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]])
        g = np.concatenate([self.b, [-bx.v_lo, bx.v_hi, -bx.w_lo, bx.w_hi]])
        return G, g


@dataclass(frozen=True)
class QpSolution:
    u: ControlInput
    cost: float
    degenerate: bool = False


def _tolerance(g: np.ndarray) -> np.ndarray:
    return 1e-10 + 1e-13 * np.abs(g)


def _polygon_points(G: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Feasible points where one or two constraints of ``G u + g >= 0`` are tight.

    Includes every vertex of the feasible polygon, which is all the
    lexicographic solve needs. Empty when the set is empty.
    """
    tol = _tolerance(g)
    nrm2 = np.einsum("ij,ij->i", G, G)
    # foot of the perpendicular from the origin onto each line
    P1 = -(g / nrm2)[:, None] * G
    i, j = np.triu_indices(len(g), 1)
    det = G[i, 0] * G[j, 1] - G[i, 1] * G[j, 0]
    ok = np.abs(det) > 1e-12 * np.sqrt(nrm2[i] * nrm2[j])
    i, j, det = i[ok], j[ok], det[ok]
    P2 = np.column_stack([(-g[i] * G[j, 1] + G[i, 1] * g[j]) / det, (-G[i, 0] * g[j] + G[j, 0] * g[i]) / det])
    P = np.vstack([P1, P2])
    return P[np.all(P @ G.T + g >= -tol, axis=1)]


def _solve_weighted(rows, uv: float, uw: float, sv: float, sw: float) -> tuple[float, float, float] | None:
    """Exact QP with strictly positive weights ``sv**2, sw**2`` on plain tuples.

    ``rows`` holds ``(gv, gw, g)`` for ``gv v + gw w + g >= 0``. Works in the
    scaled variable ``z = (sv (v - uv), sw (w - uw))`` where the cost is
    ``|z|^2``. Returns ``(v, w, |z|^2)`` or ``None`` if infeasible.
    """
    scaled = []
    for gv, gw, g in rows:
        tol = 1e-10 + 1e-13 * abs(g)
        if gv == 0.0 and gw == 0.0:
            if g < -tol:
                return None
            continue
        scaled.append((gv / sv, gw / sw, gv * uv + gw * uw + g, tol))
    if all(r[2] >= -r[3] for r in scaled):
        return uv, uw, 0.0

    def feasible(zv, zw):
        for a, b, gs, tol in scaled:
            if a * zv + b * zw + gs < -tol:
                return False
        return True

    # single active rows in order of their projection cost
    proj = []
    for a, b, gs, _ in scaled:
        n2 = a * a + b * b
        proj.append((gs * gs / n2, -gs / n2 * a, -gs / n2 * b, gs))
    best = math.inf
    bz = None
    for j, zv, zw, gs in sorted(proj, key=lambda q: q[0]):
        if gs < 0 and j < best and feasible(zv, zw):
            best, bz = j, (zv, zw)
            break
    # pairs: the meeting point costs at least the larger single cost
    idx = [i for i, q in enumerate(proj) if q[0] < best]
    for m, i in enumerate(idx):
        a1, b1, g1, _ = scaled[i]
        j1 = proj[i][0]
        for k in idx[m + 1:]:
            if max(j1, proj[k][0]) >= best:
                continue
            a2, b2, g2, _ = scaled[k]
            det = a1 * b2 - b1 * a2
            if abs(det) <= 1e-12 * math.sqrt((a1 * a1 + b1 * b1) * (a2 * a2 + b2 * b2)):
                continue
            zv = (-g1 * b2 + b1 * g2) / det
            zw = (-a1 * g2 + a2 * g1) / det
            j = zv * zv + zw * zw
            if j < best and feasible(zv, zw):
                best, bz = j, (zv, zw)
    if bz is None:
        return None
    return uv + bz[0] / sv, uw + bz[1] / sw, best


def solve_qp(problem: QpProblem) -> QpSolution | None:
    """Exact minimiser of the steering QP, or ``None`` when infeasible.

    A zero weight in ``H`` makes the objective flat along that input. The
    tie-break is lexicographic: first the weighted input is chosen as close
    to its reference as the feasible set allows, then the unweighted one is
    chosen as close to *its* reference as possible at that value (so it
    equals ``u_ref`` whenever it is unconstrained). Both weights zero is
    treated as ``H = I``. Such solutions are flagged ``degenerate``.
    """
    hv, hw = problem.H
    if (hv > 0) == (hw > 0):
        rows = [(float(a[0]), float(a[1]), float(bb)) for a, bb in zip(*problem.all_constraints())]
        uv, uw = float(problem.u_ref[0]), float(problem.u_ref[1])
        if hv > 0 and hw > 0:
            out = _solve_weighted(rows, uv, uw, math.sqrt(hv), math.sqrt(hw))
            if out is None:
                return None
            u = ControlInput(out[0], out[1])
            return QpSolution(u, problem.cost(u))
        if hv == 0 and hw == 0:
            out = _solve_weighted(rows, uv, uw, 1.0, 1.0)
            if out is None:
                return None
            return QpSolution(ControlInput(out[0], out[1]), 0.0, degenerate=True)
    G, g = problem.all_constraints()
    zero_row = np.all(G == 0.0, axis=1)
    if np.any(g[zero_row] < -_tolerance(g[zero_row])):
        return None
    G, g = G[~zero_row], g[~zero_row]
    u_ref = np.array(problem.u_ref, dtype=float)
    # exactly one zero weight: lexicographic solve over the feasible polygon
    first = 1 if hv == 0 else 0  # index of the weighted input
    other = 1 - first
    U = _polygon_points(G, g)
    if not len(U):
        return None
    lo, hi = U[:, first].min(), U[:, first].max()
    x_first = min(max(u_ref[first], lo), hi)
    o_lo, o_hi = -math.inf, math.inf
    for (c_f, c_o), gi in zip(np.take(G, [first, other], axis=1), g):
        rhs = -(c_f * x_first + gi)
        if c_o > 0:
            o_lo = max(o_lo, rhs / c_o)
        elif c_o < 0:
            o_hi = min(o_hi, rhs / c_o)
    if o_lo > o_hi:  # round-off at a polygon vertex
        o_lo = o_hi = 0.5 * (o_lo + o_hi)
    x_other = min(max(u_ref[other], o_lo), o_hi)
    out = [0.0, 0.0]
    out[first], out[other] = float(x_first), float(x_other)
    u = ControlInput(*out)
    return QpSolution(u, problem.cost(u), degenerate=True)


@dataclass
class SteerResult:
    controls: list[ControlInput] = field(default_factory=list)
    states: list[RobotState] = field(default_factory=list)
    end_time: float = 0.0
    feasible: bool = False
    min_h: float = math.inf  # smallest barrier value seen along the segment

    @property
    def end_state(self) -> RobotState | None:
        return self.states[-1] if self.feasible else None


def steer(
    start: RobotState,
    start_time: float,
    u_ref: ControlInput,
    n_steps: int,
    obstacles: ObstacleField,
    params: PlannerParams,
) -> SteerResult:
    """Roll the safety QP forward for ``n_steps`` Euler steps from ``start``.

    Step ``i`` is constrained against the obstacles predicted for
    ``start_time + i * T_s``. The segment is discarded (``feasible=False``)
    as soon as a QP is infeasible or any state on it, the start and the end
    included, has a negative barrier value against its time-aligned
    obstacles.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    box = Box.from_params(params)
    beta, r_r, ell, dt, cutoff = params.steer_beta, params.r_r, params.ell, params.T_s, params.cutoff
    u_ref = ControlInput(*u_ref)
    res = SteerResult(states=[start], end_time=start_time)
    state = start
    hv, hw = params.H
    weighted = hv > 0 and hw > 0
    sv, sw = math.sqrt(hv), math.sqrt(hw)
    box_rows = [(1.0, 0.0, -box.v_lo), (-1.0, 0.0, box.v_hi), (0.0, 1.0, -box.w_lo), (0.0, -1.0, box.w_hi)]
    for i in range(n_steps):
        t = start_time + i * dt
        rows = obstacles.row_list(to_transformed(state, ell), t, beta, r_r, cutoff)
        if rows:
            hmin = min(r[3] for r in rows)
            if hmin < 0:
                return SteerResult(res.controls, res.states, t, False, hmin)
            res.min_h = min(res.min_h, hmin)
            if weighted:
                out = _solve_weighted([r[:3] for r in rows] + box_rows, u_ref[0], u_ref[1], sv, sw)
                u = None if out is None else ControlInput(out[0], out[1])
            else:
                A = np.array([r[:2] for r in rows])
                sol = solve_qp(QpProblem(u_ref, params.H, A, np.array([r[2] for r in rows]), box))
                u = None if sol is None else sol.u
            if u is None:
                return SteerResult(res.controls, res.states, t, False, res.min_h)
        else:
            u = box.clamp(u_ref)
        state = integrate_unicycle(state, u, dt)
        res.controls.append(u)
        res.states.append(state)
    t_end = start_time + n_steps * dt
    h_end = obstacles.min_barrier(to_transformed(state, ell), t_end, r_r, cutoff)
    res.end_time = t_end
    res.min_h = min(res.min_h, h_end)
    res.feasible = h_end >= 0
    return res
