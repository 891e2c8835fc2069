"""Independent oracles for the steering QP and a randomized comparison suite.

Two oracles, neither sharing code with the solver:

* ``kkt_oracle`` enumerates every active set of size 0, 1 and 2 in the
  original (unscaled) variables, solves the equality-constrained problem
  for each in closed form, and keeps the cheapest primal-feasible point.
  The optimum of a strictly convex QP in two variables has at most two
  independent active constraints, so this covers it.
* ``grid_oracle`` evaluates the objective on a regular lattice over the
  control box and returns the cheapest lattice point meeting every row.
"""

from __future__ import annotations

import functools
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import ControlInput
from .steering import Box, QpProblem, solve_qp

FEAS_TOL = 1e-9


def _constraints(problem: QpProblem) -> list[tuple[float, float, float]]:
    bx = problem.box
    rows = [(float(a[0]), float(a[1]), float(b)) for a, b in zip(problem.A, problem.b)]
    rows += [(1.0, 0.0, -bx.v_lo), (-1.0, 0.0, bx.v_hi), (0.0, 1.0, -bx.w_lo), (0.0, -1.0, bx.w_hi)]
    return [r for r in rows if r[0] != 0.0 or r[1] != 0.0] + [r for r in rows if r[0] == 0.0 and r[1] == 0.0]


def _feasible(rows, v: float, w: float, tol: float) -> bool:
    return all(a * v + b * w + c >= -tol * (1.0 + abs(c)) for a, b, c in rows)


def kkt_oracle(problem: QpProblem) -> tuple[float, float] | None:
    """Cheapest feasible KKT candidate; needs both weights positive."""
    hv, hw = problem.H
    if not (hv > 0 and hw > 0):
        raise ValueError("the oracle needs a positive definite H")
    rv, rw = float(problem.u_ref[0]), float(problem.u_ref[1])
    rows = _constraints(problem)
    cands = [(rv, rw)]
    for a, b, c in rows:
        if a == 0.0 and b == 0.0:
            continue
        # minimise the weighted distance to u_ref on the line a v + b w + c = 0
        lam = (a * rv + b * rw + c) / (a * a / hv + b * b / hw)
        cands.append((rv - lam * a / hv, rw - lam * b / hw))
    for (a1, b1, c1), (a2, b2, c2) in itertools.combinations(rows, 2):
        det = a1 * b2 - a2 * b1
        if abs(det) <= 1e-12 * math.hypot(a1, b1) * math.hypot(a2, b2):
            continue
        cands.append(((-c1 * b2 + b1 * c2) / det, (-a1 * c2 + a2 * c1) / det))
    best, best_cost = None, math.inf
    for v, w in cands:
        if _feasible(rows, v, w, FEAS_TOL):
            c = problem.cost((v, w))
            if c < best_cost:
                best, best_cost = (v, w), c
    return best


@functools.lru_cache(maxsize=8)
def _lattice(box: Box, step: float) -> tuple[np.ndarray, np.ndarray]:
    vs = np.arange(box.v_lo, box.v_hi + 0.5 * step, step)
    ws = np.arange(box.w_lo, box.w_hi + 0.5 * step, step)
    return vs, ws


def grid_oracle(problem: QpProblem, step: float = 1e-3, dilate: float = 0.0) -> tuple[float, float] | None:
    """Cheapest lattice point (spacing ``step``) inside the feasible set.

    With ``dilate > 0`` each row ``a . u + b >= 0`` is relaxed to accept
    every point within ``dilate`` (max norm) of its half-plane.
    """
    vs, ws = _lattice(problem.box, step)
    hv, hw = problem.H
    J = (hv * (vs - problem.u_ref[0]) ** 2)[:, None] + (hw * (ws - problem.u_ref[1]) ** 2)[None, :]
    if len(problem.b):
        M = np.full(J.shape, np.inf)
        for (a, b), c in zip(problem.A, problem.b):
            c = c + dilate * (abs(a) + abs(b))
            np.minimum(M, np.add.outer(a * vs + c, b * ws), out=M)
        J[M < 0] = np.inf
    i, j = np.unravel_index(int(np.argmin(J)), J.shape)
    if not math.isfinite(J[i, j]):
        return None
    return float(vs[i]), float(ws[j])


def _cell_cost_bound(problem: QpProblem, u, step: float) -> float:
    """Largest objective over the box of half-width ``step`` around ``u``."""
    dv = abs(u[0] - problem.u_ref[0]) + step
    dw = abs(u[1] - problem.u_ref[1]) + step
    return problem.H[0] * dv * dv + problem.H[1] * dw * dw


def random_problem(rng: np.random.Generator, max_rows: int = 5, H: tuple[float, float] = (1e5, 1e5)) -> QpProblem:
    """Box of the robot's control limits, 0..max_rows random half-planes.

    Rows are built as ``a . (u - p) + s >= 0`` around a random point ``p``
    of the box so most problems are feasible, with some slack ``s`` drawn
    negative to produce infeasible ones now and then.
    """
    box = Box(0.0, 0.33, -0.3, 0.3)
    n = int(rng.integers(0, max_rows + 1))
    if rng.random() < 0.5:
        u_ref = (rng.uniform(box.v_lo, box.v_hi), rng.uniform(box.w_lo, box.w_hi))
    else:
        u_ref = (rng.uniform(-0.5, 0.8), rng.uniform(-0.8, 0.8))
    A = rng.normal(size=(n, 2)) * rng.choice([0.1, 1.0, 10.0], size=(n, 1))
    p = np.array([rng.uniform(box.v_lo, box.v_hi), rng.uniform(box.w_lo, box.w_hi)])
    slack = rng.uniform(-0.02, 0.1, size=n) * np.linalg.norm(A, axis=1)
    b = slack - A @ p
    return QpProblem(ControlInput(*u_ref), H, A, b, box)


@dataclass
class QpCheckReport:
    problems: int = 0
    infeasible: int = 0
    grid_skipped: int = 0  # feasible set contains no lattice point
    grid_offset: int = 0  # lattice argmin more than one cell from the solver's point (informational)
    cost_failures: list[int] = field(default_factory=list)
    grid_failures: list[int] = field(default_factory=list)
    feasibility_failures: list[int] = field(default_factory=list)
    status_failures: list[int] = field(default_factory=list)
    max_cost_error: float = 0.0
    max_violation: float = 0.0
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.cost_failures or self.grid_failures or self.feasibility_failures or self.status_failures)

    def summary(self) -> str:
        return (
            f"qp-check: {self.problems} problems ({self.infeasible} infeasible, {self.grid_skipped} without lattice points), "
            f"cost mismatches {len(self.cost_failures)}, grid mismatches {len(self.grid_failures)} "
            f"(argmin off by more than a cell in {self.grid_offset}), "
            f"row violations {len(self.feasibility_failures)}, feasibility disagreements {len(self.status_failures)}; "
            f"max |cost error| {self.max_cost_error:.3g}, worst row value {-self.max_violation:.3g}, {self.seconds:.2f} s"
        )


def run_suite(n: int = 500, seed: int = 0, grid_step: float = 1e-3, cost_tol: float = 1e-6) -> QpCheckReport:
    """Compare ``solve_qp`` with both oracles on ``n`` random problems.

    Checks per problem: the solver and the enumeration oracle agree on
    feasibility; objectives agree to ``cost_tol`` (absolute, or relative
    when the cost exceeds 1); every row holds to ``-1e-9`` at the solver's
    point; the grid oracle agrees to within one lattice cell: no feasible
    lattice point beats the solver, and the best lattice point within one
    cell of the feasible set costs no more than the worst point of the
    cell-sized box centred on the solver's answer. The dilation matters at
    acute vertices of the feasible polygon, where no feasible lattice point
    may lie within a cell of the optimum.

    The lattice argmin itself is not compared by position: along a
    constraint line that is nearly orthogonal to ``u - u_ref`` the cost is
    flat to second order and the argmin can sit several cells away from
    the exact optimum. Such cases are counted in ``grid_offset``.
    """
    rng = np.random.default_rng(seed)
    rep = QpCheckReport()
    t0 = time.perf_counter()
    for k in range(n):
        prob = random_problem(rng)
        rep.problems += 1
        sol = solve_qp(prob)
        ref = kkt_oracle(prob)
        if (sol is None) != (ref is None):
            rep.status_failures.append(k)
            continue
        if sol is None:
            rep.infeasible += 1
            continue
        c_ref = prob.cost(ref)
        err = abs(sol.cost - c_ref)
        rep.max_cost_error = max(rep.max_cost_error, err)
        if err > cost_tol * max(1.0, abs(c_ref)):
            rep.cost_failures.append(k)
        if len(prob.b):
            worst = float(np.min(prob.A @ np.array(sol.u) + prob.b))
            rep.max_violation = max(rep.max_violation, -worst)
            if worst < -1e-9:
                rep.feasibility_failures.append(k)
        g = grid_oracle(prob, grid_step)
        if g is None:
            rep.grid_skipped += 1
            continue
        if max(abs(sol.u[0] - g[0]), abs(sol.u[1] - g[1])) > grid_step * (1 + 1e-6):
            rep.grid_offset += 1
        c_grid = prob.cost(g)
        c_near = prob.cost(grid_oracle(prob, grid_step, dilate=grid_step))
        if sol.cost > c_grid + cost_tol * max(1.0, c_grid) or c_near > _cell_cost_bound(prob, sol.u, grid_step):
            rep.grid_failures.append(k)
    rep.seconds = time.perf_counter() - t0
    return rep
