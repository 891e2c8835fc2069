"""Command-line entry point: ``cbfplan <subcommand> ...``.

Exit codes:

=====  =====================================================
0      success (goal reached; sweep with every run reaching it;
       qp-check with no mismatch)
1      qp-check found a mismatch
2      usage error (bad flags)
3      timeout (sweep: some run failed to reach the goal)
4      collision (sweep: any run collided)
5      scenario, parameter or input file error
=====  =====================================================
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_TIMEOUT = 3
EXIT_COLLISION = 4
EXIT_SPEC_ERROR = 5

# Two pedestrians heading for different exits, four observations each.
DEMO_TRACKLETS = (
    ("a", 0.0, -2.0, 0.0),
    ("a", 0.1, -1.9, 0.0),
    ("a", 0.2, -1.8, 0.0),
    ("a", 0.3, -1.7, 0.0),
    ("b", 0.0, 1.0, 3.0),
    ("b", 0.1, 1.0, 2.9),
    ("b", 0.2, 1.0, 2.8),
    ("b", 0.3, 1.0, 2.7),
)
DEMO_GOALS = ((4.0, 0.0), (-4.0, 0.0), (1.0, -3.0))


class InputError(Exception):
    """Bad scenario, parameter or input file; maps to the spec-error exit code."""


def _commit_horizon(text: str) -> str:
    if text.lower() in ("ns", "n_s"):
        return "Ns"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 1, an integer up to N_s, or 'Ns'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("commit horizon must be at least 1")
    return str(n)


def _read_params(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read parameter file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"parameter file {path} must hold a JSON object")
    return data


def _resolve(scenario: str, overrides: dict[str, Any], seed: int | None = None, commit_horizon: str | None = None):
    """Scenario spec and final parameters: defaults, scenario, file, flags."""
    from .params import apply_overrides
    from .scenario import ScenarioError, load_scenario, validate_scenario

    try:
        spec = load_scenario(scenario)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    except ScenarioError as exc:
        raise InputError(f"{scenario}:\n{exc}") from exc
    overrides = dict(overrides)
    if seed is not None:
        overrides["seed"] = seed
    try:
        p = apply_overrides(spec.planner_params(), overrides)
        if commit_horizon is not None:
            p = p.replace(commit_horizon=p.N_s if commit_horizon == "Ns" else int(commit_horizon))
        validate_scenario(spec, p)
    except ScenarioError as exc:
        raise InputError(f"{scenario}:\n{exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad parameter: {exc.args[0] if exc.args else exc}") from exc
    return spec, p


def _status_code(status: str) -> int:
    return {"success": EXIT_OK, "timeout": EXIT_TIMEOUT, "collision": EXIT_COLLISION}[status]


def _fmt_opt(x: float | None) -> str:
    return "-" if x is None or not math.isfinite(x) else f"{x:.3f}"


def cmd_plan(args: argparse.Namespace) -> int:
    from .sim import run_scenario
    from .trace import emit_plot_data, emit_trace, make_header

    spec, p = _resolve(args.scenario, _read_params(args.params), args.seed, args.commit_horizon)
    outcome, trace = run_scenario(spec, p, max_time=args.max_time)
    if args.trace:
        with open(args.trace, "wb") as fh:
            emit_trace(trace, fh, make_header(spec.name, p, outcome))
    if args.plot_data:
        with open(args.plot_data, "wb") as fh:
            emit_plot_data(trace, fh)
    print(
        f"{spec.name} seed={p.seed}: {outcome.status} "
        f"time_to_goal={_fmt_opt(outcome.time_to_goal)} sim_time={outcome.sim_time:.1f} "
        f"min_h={_fmt_opt(outcome.min_h)} min_clearance={_fmt_opt(outcome.min_clearance)} steps={outcome.steps}"
    )
    return _status_code(outcome.status)


def _sweep_one(job: tuple[str, dict[str, Any], int, float, str | None]):
    from .sim import run_scenario

    scenario, overrides, seed, max_time, ch = job
    spec, p = _resolve(scenario, overrides, seed, ch)
    outcome, _ = run_scenario(spec, p, max_time=max_time)
    return seed, outcome


def summarize(outcomes: Sequence) -> dict[str, Any]:
    """Success count, mean time to goal over successes, global minimum of min_h."""
    times = [o.time_to_goal for o in outcomes if o.success]
    return {
        "runs": len(outcomes),
        "successes": sum(o.success for o in outcomes),
        "collisions": sum(o.collision for o in outcomes),
        "timeouts": sum(o.status == "timeout" for o in outcomes),
        "mean_time_to_goal": statistics.fmean(times) if times else None,
        "min_h": min((o.min_h for o in outcomes), default=math.inf),
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    params = _read_params(args.params)
    # fail early on a bad scenario or parameter
    _resolve(args.scenario, params, args.first_seed, args.commit_horizon)
    jobs = [(args.scenario, params, s, args.max_time, args.commit_horizon) for s in range(args.first_seed, args.first_seed + args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    for seed, o in results:
        print(f"seed {seed}: {o.status} time_to_goal={_fmt_opt(o.time_to_goal)} min_h={_fmt_opt(o.min_h)}")
    outcomes = [o for _, o in results]
    s = summarize(outcomes)
    print(
        f"{args.scenario}: {s['successes']}/{s['runs']} reached the goal, "
        f"{s['collisions']} collisions, {s['timeouts']} timeouts, "
        f"mean time_to_goal {_fmt_opt(s['mean_time_to_goal'])} s, global min_h {_fmt_opt(s['min_h'])}"
    )
    if s["collisions"]:
        return EXIT_COLLISION
    return EXIT_OK if s["successes"] == s["runs"] else EXIT_TIMEOUT


def cmd_qp_check(args: argparse.Namespace) -> int:
    from .qpcheck import run_suite

    rep = run_suite(args.problems, args.seed)
    print(rep.summary())
    return EXIT_OK if rep.ok else EXIT_CHECK_FAILED


def _read_tracklets(path: str) -> list[tuple[str, float, float, float]]:
    out = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError("expected 'id t x y'")
            out.append((parts[0], float(parts[1]), float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from exc
    return out


def cmd_predict_demo(args: argparse.Namespace) -> int:
    import numpy as np

    from .prediction import GridSpec, ObservationError, PredictorConfig, TrackletStore, extract_disc, predict
    from .trace import emit_occupancy

    obs = _read_tracklets(args.tracklets) if args.tracklets else list(DEMO_TRACKLETS)
    goals = tuple(tuple(g) for g in args.goal) if args.goal else DEMO_GOALS
    store = TrackletStore()
    try:
        store.ingest_many((aid, t, (x, y)) for aid, t, x, y in obs)
    except ObservationError as exc:
        raise InputError(str(exc)) from exc
    cfg = PredictorConfig(horizon=args.horizon, samples=args.samples, goals=goals, grid=GridSpec(cell_size=args.cell), seed=args.seed)
    maps = predict(store, cfg, np.random.default_rng(args.seed))
    if args.out:
        with open(args.out, "wb") as fh:
            emit_occupancy(maps, fh, args.p_o)
    else:
        emit_occupancy(maps, sys.stdout.buffer, args.p_o)
        sys.stdout.flush()
    for aid, seq in maps.items():
        last = extract_disc(seq[-1], args.p_o)
        desc = "vacuous" if last.vacuous else f"center=({last.center[0]:.2f}, {last.center[1]:.2f}) r={last.radius:.2f}"
        print(f"agent {aid}: {len(seq)} maps, step {seq[-1].step} disc {desc}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbfplan", description="Safe sampling-based navigation among pedestrians.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one scenario")
    p.add_argument("scenario", help="built-in scenario name or path to a .scn file")
    p.add_argument("--seed", type=int, default=None, help="planner seed (default: the scenario's or 0)")
    p.add_argument("--max-time", type=float, default=120.0, help="simulated timeout [s]")
    p.add_argument("--commit-horizon", type=_commit_horizon, default=None, help="controls executed per cycle: an integer or 'Ns'")
    p.add_argument("--trace", help="write the step trace here")
    p.add_argument("--plot-data", help="write time, v, omega, min_h as CSV here")
    p.add_argument("--params", help="JSON object of parameter overrides")
    p.set_defaults(func=cmd_plan)

    s = sub.add_parser("sweep", help="run a scenario over consecutive seeds")
    s.add_argument("scenario")
    s.add_argument("--seeds", type=int, default=20, help="number of seeds")
    s.add_argument("--first-seed", type=int, default=0)
    s.add_argument("--max-time", type=float, default=120.0)
    s.add_argument("--commit-horizon", type=_commit_horizon, default=None)
    s.add_argument("--params", help="JSON object of parameter overrides")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    q = sub.add_parser("qp-check", help="compare the QP solver with independent oracles")
    q.add_argument("--problems", type=int, default=500)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_qp_check)

    d = sub.add_parser("predict-demo", help="dump occupancy maps for a tracklet fixture")
    d.add_argument("tracklets", nargs="?", help="file of 'id t x y' lines (default: built-in fixture)")
    d.add_argument("--goal", type=float, nargs=2, action="append", metavar=("X", "Y"), help="pedestrian goal (repeatable)")
    d.add_argument("--horizon", type=int, default=10)
    d.add_argument("--samples", type=int, default=256)
    d.add_argument("--cell", type=float, default=0.1)
    d.add_argument("--p-o", type=float, default=0.2)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", help="write maps here instead of stdout")
    d.set_defaults(func=cmd_predict_demo)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("seeds", "jobs", "problems", "horizon", "samples"):
        if getattr(args, name, 1) < 1:
            print(f"cbfplan: --{name} must be at least 1", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except InputError as exc:
        print(f"cbfplan: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR


if __name__ == "__main__":
    sys.exit(main())
