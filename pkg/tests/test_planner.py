import math

import numpy as np
import pytest

from cbfplan import planner as planner_mod
from cbfplan.barriers import DiscObstacle, ObstacleField, SegmentWall
from cbfplan.geometry import ZERO_CONTROL, ControlInput, GoalRegion, RobotState, goal_distance
from cbfplan.params import PlannerParams
from cbfplan.planner import (
    PlanTree,
    TreePlanner,
    extract_control,
    grow_cycle,
    grow_once,
    ref_sample,
    reroot,
    revalidate,
    select_vertex,
    state_sample,
    vertex_cost,
    vertex_sample,
)
from cbfplan.steering import SteerResult, steer

P = PlannerParams()
GOAL = GoalRegion((0.0, 5.0), 0.3)

# chi-square critical value, 3 degrees of freedom, significance 0.01
CHI2_3DF_01 = 11.345
# Kolmogorov-Smirnov asymptotic critical coefficient at significance 0.01
KS_01 = 1.628


def seg(start, controls, t0=0.0, dt=0.1):
    states = [start]
    from cbfplan.geometry import integrate_unicycle

    for u in controls:
        states.append(integrate_unicycle(states[-1], u, dt))
    return SteerResult(list(controls), states, t0 + dt * len(controls), True)


# --- sampling --------------------------------------------------------------------


def test_vertex_sample_single_and_empty():
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    rng = np.random.default_rng(0)
    assert all(vertex_sample(tree, rng) is tree.root for _ in range(20))
    tree.vertices = []
    with pytest.raises(ValueError):
        vertex_sample(tree, rng)


def test_vertex_sample_is_uniform():
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    for i in range(3):
        tree.add(tree.root, seg(RobotState(0, 0, 0), [ControlInput(0.2, 0.1 * i)]), 1.0)
    rng = np.random.default_rng(1)
    n = 40_000
    counts = {id(v): 0 for v in tree.vertices}
    for _ in range(n):
        counts[id(vertex_sample(tree, rng))] += 1
    chi2 = sum((c - n / 4) ** 2 / (n / 4) for c in counts.values())
    assert chi2 < CHI2_3DF_01


def test_state_sample_examples():
    tree = PlanTree(RobotState(0, 0, 1.0), 0.0)
    s = state_sample(tree.root, GOAL, 0.0, np.random.default_rng(0))
    assert s.theta == pytest.approx(math.pi / 2) and (s.x, s.y) == (0, 0)
    rng = np.random.default_rng(2)
    th = np.array([state_sample(tree.root, GOAL, 1.0, rng).theta for _ in range(10_000)])
    mean = math.atan2(np.sin(th).mean(), np.cos(th).mean())
    assert abs(mean - math.pi / 2) < 0.05
    assert np.all((th >= -math.pi) & (th < math.pi))


def test_ref_sample_examples():
    rng = np.random.default_rng(0)
    on = ref_sample(RobotState(0, 0, math.pi / 2), GOAL, P, rng)
    assert on.omega == 0.0
    # theta - theta_g = pi (wrapped to -pi): a_omega * -pi = -0.63, clamped to -0.3
    back = ref_sample(RobotState(0, 0, -math.pi / 2), GOAL, P, rng)
    assert back.omega == -0.3
    small = ref_sample(RobotState(0, 0, math.pi / 2 + 0.5), GOAL, P, rng)
    assert small.omega == pytest.approx(0.2 * 0.5)
    turned = ref_sample(RobotState(0, 0, 0.5), GOAL, P, rng, ref_heading=0.0)
    assert turned.omega == pytest.approx(0.1)


def test_ref_sample_speed_is_uniform():
    rng = np.random.default_rng(3)
    v = np.sort([ref_sample(RobotState(0, 0, 0), GOAL, P, rng).v for _ in range(10_000)])
    assert v.min() >= 0.2 and v.max() <= 0.33
    cdf = (v - 0.2) / 0.13
    n = len(v)
    ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert ks < KS_01 / math.sqrt(n)


# --- cost --------------------------------------------------------------------------


def wall_field(h_target):
    """Half-plane field giving barrier value ``h_target`` at the origin heading +x."""
    from cbfplan.barriers import HalfPlaneObstacle

    pad = P.ell + P.r_r
    return ObstacleField(halfplanes=[HalfPlaneObstacle((-1.0, 0.0), -(h_target + pad + P.ell))])


def test_vertex_cost_examples():
    goal = GoalRegion((0.0, 3.3), 0.3)  # distance 3 from the origin
    field = wall_field(2.0)
    assert field.min_barrier(planner_mod.to_transformed(RobotState(0, 0, 0), P.ell), 0.0, P.r_r) == pytest.approx(2.0)
    assert vertex_cost(RobotState(0, 0, 0), 0.0, goal, field, P) == pytest.approx(1.0)
    assert vertex_cost(RobotState(0, 3.2, 0), 0.0, goal, field, P) == 0.0
    unsafe = vertex_cost(RobotState(0, 0, 0), 0.0, goal, wall_field(-0.5), P)
    assert unsafe == pytest.approx(3.0 / (1.5 * 1e-3))
    capped = vertex_cost(RobotState(0, 0, 0), 0.0, goal, field, P.replace(h_cap=1.0))
    assert capped == pytest.approx(2.0)
    # no obstacle in range: h is infinite, cost is zero unless capped
    assert vertex_cost(RobotState(0, 0, 0), 0.0, goal, ObstacleField(), P) == 0.0
    assert vertex_cost(RobotState(0, 0, 0), 0.0, goal, ObstacleField(), P.replace(h_cap=1.0)) == pytest.approx(2.0)


# --- growth ------------------------------------------------------------------------


def test_grow_in_open_space_makes_progress():
    tree = PlanTree(RobotState(0, 0, math.pi / 2), 0.0)
    rng = np.random.default_rng(0)
    field = ObstacleField.from_obstacles([DiscObstacle((3.0, 0.0), 0.2)])
    for _ in range(50):
        grow_once(tree, field, GOAL, P, rng)
    d0 = goal_distance(tree.root.state, GOAL)
    assert any(goal_distance(v.state, GOAL) < d0 for v in tree.vertices[1:])
    for v in tree.vertices[1:]:
        assert v.time == pytest.approx(v.parent.time + P.N_s * P.T_s)
        assert v.cost == pytest.approx(vertex_cost(v.state, v.time, GOAL, field, P))


def test_grow_fails_when_enclosed():
    # walls closer than ell + r_r on every side: the root lies inside the inflated set
    d = 0.3
    walls = [
        SegmentWall((-d, -d), (d, -d)),
        SegmentWall((d, -d), (d, d)),
        SegmentWall((d, d), (-d, d)),
        SegmentWall((-d, d), (-d, -d)),
    ]
    field = ObstacleField.from_obstacles(walls)
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        grow_once(tree, field, GOAL, P, rng)
    assert len(tree) == 1


def test_node_budget_zero_leaves_tree_unchanged():
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    res = grow_cycle(tree, ObstacleField(), GOAL, P.replace(node_budget=0), np.random.default_rng(0))
    assert len(tree) == 1 and res.inserted == 0 and res.attempts == 0
    assert res.control == ZERO_CONTROL and res.first_edge is None


def test_budget_counts_insertions():
    tree = PlanTree(RobotState(-5, 0, 0), 0.0)
    field = ObstacleField.from_obstacles([SegmentWall((-8, -1), (8, -1)), SegmentWall((-8, 1), (8, 1))])
    for b in (1, 5, 20):
        res = grow_cycle(tree, field, GOAL, P.replace(node_budget=b), np.random.default_rng(b))
        assert res.inserted <= b and res.attempts <= P.max_attempts


def test_deadline_stops_new_attempts(monkeypatch):
    starts = []
    real = planner_mod.grow_once

    def timed(*a, **k):
        import time

        starts.append(time.perf_counter())
        return real(*a, **k)

    monkeypatch.setattr(planner_mod, "grow_once", timed)
    import time

    t0 = time.perf_counter()
    tree = PlanTree(RobotState(-5, 0, 0), 0.0)
    res = grow_cycle(tree, ObstacleField(), GOAL, P.replace(deadline=0.02), np.random.default_rng(0), t0)
    assert starts and all(s < t0 + 0.02 for s in starts)
    assert res.attempts == len(starts)


# --- selection -------------------------------------------------------------------


def test_extract_control_examples():
    tree = PlanTree(RobotState(0, 0, 0), 0.0, root_cost=5.0)
    assert extract_control(tree, select_vertex(tree)) == (ZERO_CONTROL, None)
    child = tree.add(tree.root, seg(RobotState(0, 0, 0), [ControlInput(0.3, 0.1), ControlInput(0.2, 0.0)]), 1.0)
    grand = tree.add(child, seg(child.state, [ControlInput(0.25, -0.1)], t0=child.time), 0.5)
    u, first = extract_control(tree, select_vertex(tree))
    assert u == (0.3, 0.1) and first is child
    assert select_vertex(tree) is grand


def test_select_vertex_tie_goes_to_earliest():
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    a = tree.add(tree.root, seg(RobotState(0, 0, 0), [ControlInput(0.2, 0.0)]), 1.0)
    tree.add(tree.root, seg(RobotState(0, 0, 0), [ControlInput(0.3, 0.0)]), 1.0)
    assert select_vertex(tree) is a


# --- re-rooting ------------------------------------------------------------------


def two_level_tree():
    tree = PlanTree(RobotState(0, 0, 0), 0.0)
    ctrl = [ControlInput(0.3, 0.05)] * 7
    a = tree.add(tree.root, seg(RobotState(0, 0, 0), ctrl), 1.0)
    b = tree.add(tree.root, seg(RobotState(0, 0, 0), [ControlInput(-0.3, 0.0)] * 7), 2.0)  # backwards
    c = tree.add(a, seg(a.state, ctrl, t0=a.time), 0.5)
    return tree, a, b, c


def test_reroot_keeps_followed_branch_partially_executed():
    tree, a, b, c = two_level_tree()
    executed = [a.edge.controls[0]]
    new_state = a.edge.states[1]
    out = reroot(tree, a, executed, new_state, 0.1)
    assert out is tree
    assert out.root.state == new_state and out.root.time == 0.1
    assert b not in out.vertices and a in out.vertices and c in out.vertices
    assert a.parent is out.root and a.edge.states[0] == new_state
    assert len(a.edge.controls) == 6 and a.time == pytest.approx(0.7)
    assert [v.order for v in out.vertices] == sorted(v.order for v in out.vertices)


def test_reroot_fully_executed_edge_promotes_child():
    tree, a, b, c = two_level_tree()
    out = reroot(tree, a, list(a.edge.controls), a.state, a.time)
    assert out.root is a and a.parent is None and a.edge is None
    assert set(out.vertices) == {a, c}


def test_reroot_discards_on_mismatch():
    tree, a, _, _ = two_level_tree()
    disturbed = RobotState(a.edge.states[1].x + 1e-3, a.edge.states[1].y, a.edge.states[1].theta)
    out = reroot(tree, a, [a.edge.controls[0]], disturbed, 0.1)
    assert len(out) == 1 and out.root.state == disturbed
    out = reroot(two_level_tree()[0], None, [ZERO_CONTROL], RobotState(1, 1, 0), 0.1)
    assert len(out) == 1 and out.root.state == (1, 1, 0)


def test_revalidate_prunes_unsafe_branches_and_refreshes_costs():
    tree, a, b, c = two_level_tree()
    # a disc ahead of the root blocks the end of branch a; c hangs off a and goes too
    field = ObstacleField.from_obstacles([DiscObstacle((0.55, 0.0), 0.05)])
    removed = revalidate(tree, field, GOAL, P)
    assert removed == 2 and set(tree.vertices) == {tree.root, b}
    assert b.cost == pytest.approx(vertex_cost(b.state, b.time, GOAL, field, P), rel=1e-12)
    assert tree.root.cost == pytest.approx(vertex_cost(tree.root.state, 0.0, GOAL, field, P))


def test_revalidate_matches_vertex_cost_on_grown_tree():
    field = ObstacleField.from_obstacles([SegmentWall((-8, -1), (8, -1)), SegmentWall((-8, 1.2), (8, 1.2))])
    tree = PlanTree(RobotState(-5, 0, 0), 0.0)
    rng = np.random.default_rng(4)
    for _ in range(60):
        grow_once(tree, field, GOAL, P, rng)
    for v in tree.vertices[1:]:
        v.cost = -1.0
    assert revalidate(tree, field, GOAL, P.replace(h_cap=1.0)) == 0
    for v in tree.vertices[1:]:
        assert v.cost == pytest.approx(vertex_cost(v.state, v.time, GOAL, field, P.replace(h_cap=1.0)), rel=1e-12)


def test_every_stored_state_is_safe_at_creation():
    field = ObstacleField.from_obstacles([DiscObstacle((-4.0, 0.3), 0.3), SegmentWall((-8, -1), (8, -1))])
    tree = PlanTree(RobotState(-5, 0, 0), 0.0)
    rng = np.random.default_rng(6)
    for _ in range(80):
        grow_once(tree, field, GOAL, P, rng)
    assert len(tree) > 1
    for v in tree.vertices[1:]:
        for i, s in enumerate(v.edge.states):
            h = field.min_barrier(planner_mod.to_transformed(s, P.ell), v.parent.time + i * P.T_s, P.r_r, P.cutoff)
            assert h >= 0
        steps = v.time / P.T_s
        assert abs(steps - round(steps)) < 1e-9


# --- driver ----------------------------------------------------------------------


def run_cycles(seed, n=15):
    walls = [SegmentWall((-8, -1.25), (8, -1.25)), SegmentWall((-8, 1.25), (-2, 1.25))]
    pl = TreePlanner(GOAL, walls, P.replace(seed=seed), human_goals=[(8.0, 0.0)])
    state, t = RobotState(-5, 0, 0), 0.0
    out = []
    from cbfplan.geometry import integrate_unicycle

    for k in range(n):
        pl.observe([("h", t, (-3.0 + t, -0.8))])
        res = pl.plan_cycle(t, state)
        u = res.commit[0]
        state = integrate_unicycle(state, u, P.T_s)
        t = round(t + P.T_s, 10)
        pl.advance(res, [u], state, t)
        out.append((u, len(pl.tree), res.inserted))
    return out


def test_planner_is_deterministic():
    assert run_cycles(3) == run_cycles(3)
    assert run_cycles(3) != run_cycles(4)


def brute_best(tree):
    return min(tree.vertices, key=lambda v: (v.cost, v.order))


def test_tracked_best_matches_full_scan():
    field = ObstacleField.from_obstacles([DiscObstacle((0.5, 1.5), 0.3), SegmentWall((-2, -0.5), (2, -0.5))])
    tree = PlanTree(RobotState(0, 0, math.pi / 2), 0.0)
    rng = np.random.default_rng(4)
    for _ in range(5):
        res = grow_cycle(tree, field, GOAL, P, rng)
        assert res.selected is brute_best(tree)
        moved = ObstacleField.from_obstacles([DiscObstacle((rng.uniform(-1, 1), 1.0), 0.3)])
        revalidate(tree, moved, GOAL, P)
        assert select_vertex(tree) is brute_best(tree)
        if res.first_edge is not None:
            u = res.first_edge.edge.controls[0]
            tree = reroot(tree, res.first_edge, [u], res.first_edge.edge.states[1], tree.root.time + P.T_s)
            assert select_vertex(tree) is brute_best(tree)
