import io
import json
import subprocess
import sys

import pytest

from cbfplan.cli import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_SPEC_ERROR,
    EXIT_TIMEOUT,
    EXIT_USAGE,
    main,
    summarize,
)
from cbfplan.sim import SimOutcome
from cbfplan.trace import read_trace


def test_plan_scenario1_writes_trace(tmp_path, capsys):
    trace = tmp_path / "t.log"
    plot = tmp_path / "p.csv"
    assert main(["plan", "scenario1", "--seed", "7", "--trace", str(trace), "--plot-data", str(plot)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("scenario1 seed=7: success")
    head, recs = read_trace(io.BytesIO(trace.read_bytes()))
    assert head["scenario"] == "scenario1" and head["params"]["seed"] == 7
    assert head["outcome"]["status"] == "success" and head["outcome"]["steps"] == len(recs)
    rows = plot.read_text().splitlines()
    assert rows[0] == "time,v,omega,min_h" and len(rows) == len(recs) + 1


def test_plan_sealed_goal_times_out(capsys):
    assert main(["plan", "sealed-goal", "--max-time", "10"]) == EXIT_TIMEOUT
    assert ": timeout " in capsys.readouterr().out


def test_plan_spec_errors(tmp_path, capsys):
    assert main(["plan", "no-such-scenario"]) == EXIT_SPEC_ERROR
    bad = tmp_path / "bad.scn"
    bad.write_text("start 0 0 0\ngoal 1 0 0.3\nwarp 9\n")
    assert main(["plan", str(bad)]) == EXIT_SPEC_ERROR
    assert "line 3: unknown directive 'warp'" in capsys.readouterr().err
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"gamma": 1}))
    assert main(["plan", "empty-corridor", "--params", str(params)]) == EXIT_SPEC_ERROR
    params.write_text("[1, 2]")
    assert main(["plan", "empty-corridor", "--params", str(params)]) == EXIT_SPEC_ERROR
    assert main(["plan", "empty-corridor", "--commit-horizon", "8"]) == EXIT_SPEC_ERROR


def test_plan_params_file_and_commit_horizon(tmp_path, capsys):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"node_budget": 5}))
    trace = tmp_path / "t.log"
    code = main(["plan", "empty-corridor", "--params", str(params), "--commit-horizon", "Ns", "--max-time", "2", "--trace", str(trace)])
    assert code == EXIT_TIMEOUT
    head, _ = read_trace(io.BytesIO(trace.read_bytes()))
    assert head["params"]["node_budget"] == 5 and head["params"]["commit_horizon"] == 7


def test_usage_errors():
    for argv in (["plan"], ["fly"], ["plan", "scenario1", "--commit-horizon", "0"], []):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == EXIT_USAGE
    assert main(["sweep", "scenario1", "--seeds", "0"]) == EXIT_USAGE


def test_sweep_summary(capsys):
    assert main(["sweep", "empty-corridor", "--seeds", "2"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("seed 0: success") and out[1].startswith("seed 1: success")
    assert out[-1].startswith("empty-corridor: 2/2 reached the goal, 0 collisions, 0 timeouts, mean time_to_goal ")
    assert "global min_h " in out[-1]


def test_sweep_with_timeouts_and_jobs(capsys):
    assert main(["sweep", "empty-corridor", "--seeds", "2", "--first-seed", "5", "--max-time", "1", "--jobs", "2"]) == EXIT_TIMEOUT
    out = capsys.readouterr().out
    assert "seed 5: timeout" in out and "seed 6: timeout" in out and "0/2 reached" in out


def test_summarize():
    ok = SimOutcome(True, False, 30.0, 0.2, 0.5, 300, 30.0)
    ok2 = SimOutcome(True, False, 40.0, 0.3, 0.1, 400, 40.0)
    late = SimOutcome(False, False, None, 0.4, 0.7, 1200, 120.0)
    s = summarize([ok, ok2, late])
    assert s == {"runs": 3, "successes": 2, "collisions": 0, "timeouts": 1, "mean_time_to_goal": 35.0, "min_h": 0.1}
    assert summarize([late])["mean_time_to_goal"] is None


def test_qp_check(capsys):
    assert main(["qp-check", "--problems", "50", "--seed", "3"]) == EXIT_OK
    assert "50" in capsys.readouterr().out


def test_qp_check_reports_failure(monkeypatch):
    import cbfplan.qpcheck as qc

    real = qc.run_suite

    def broken(*a, **k):
        rep = real(*a, **k)
        rep.cost_failures.append(0)
        return rep

    monkeypatch.setattr(qc, "run_suite", broken)
    assert main(["qp-check", "--problems", "5"]) == EXIT_CHECK_FAILED


def test_predict_demo_builtin(capsysbinary):
    assert main(["predict-demo", "--horizon", "3", "--samples", "64"]) == EXIT_OK
    cap = capsysbinary.readouterr()
    lines = [json.loads(x) for x in cap.out.decode().splitlines()]
    assert len(lines) == 2 * 4
    assert {(r["agent"], r["step"]) for r in lines} == {(a, k) for a in "ab" for k in range(4)}
    assert all("disc" in r for r in lines)
    assert b"agent a: 4 maps" in cap.err


def test_predict_demo_file(tmp_path):
    src = tmp_path / "obs.txt"
    src.write_text("# id t x y\nw 0.0 0 0\nw 0.1 0.1 0\nw 0.2 0.2 0\n")
    out = tmp_path / "maps.ndjson"
    assert main(["predict-demo", str(src), "--goal", "5", "0", "--horizon", "2", "--out", str(out)]) == EXIT_OK
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["step"] for r in recs] == [0, 1, 2]
    assert recs[-1]["disc"][0] == pytest.approx(0.4, abs=0.1)


def test_predict_demo_bad_file(tmp_path):
    src = tmp_path / "obs.txt"
    src.write_text("w 0.0 0 0\nw zero 1 1\n")
    assert main(["predict-demo", str(src)]) == EXIT_SPEC_ERROR
    src.write_text("w 0.1 0 0\nw 0.0 1 1\n")
    assert main(["predict-demo", str(src)]) == EXIT_SPEC_ERROR
    assert main(["predict-demo", str(tmp_path / "missing.txt")]) == EXIT_SPEC_ERROR


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cbfplan", "plan", "sealed-goal", "--max-time", "1"], capture_output=True, text=True)
    assert res.returncode == EXIT_TIMEOUT
    assert res.stdout.startswith("sealed-goal seed=0: timeout")
