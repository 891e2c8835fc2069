"""Trace files: one JSON header line followed by one JSON record per step.

Numbers are written with 9 significant digits (``format(x, ".9g")``) and
keys always appear in the same order, so two runs with the same scenario,
parameters and seed produce identical bytes. A value of ``+inf`` (a
barrier minimum with no obstacle in range) is written as ``null``.

Record layout::

    {"t": .., "robot": [x, y, theta], "u": [v, omega],
     "agents": {id: [x, y], ..},
     "discs": {id: [[cx, cy, r, t], ..], ..},
     "cost": .., "disp": .., "min_h": .., "tree": .., "inserted": ..}

``discs`` holds the non-vacuous predicted level-set discs seen by the
planner for that cycle, with the raw level-set radius (the planner adds
``disc_padding`` on top).
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

from .params import PlannerParams
from .prediction import OccupancyMap
from .sim import SimOutcome, TraceRecord

TRACE_FORMAT = "cbfplan-trace"
TRACE_VERSION = 1
PLOT_COLUMNS = ("time", "v", "omega", "min_h")


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x) or x == -math.inf:
        raise ValueError(f"cannot write {x} to a trace")
    if x == math.inf:
        return "null"
    s = format(x, ".9g")
    return "0" if s == "-0" else s


def _key(k: Any) -> str:
    return json.dumps(str(k))


def _vec(xs: Iterable[float]) -> str:
    return "[" + ",".join(fmt(x) for x in xs) + "]"


def format_record(rec: TraceRecord) -> str:
    agents = ",".join(f"{_key(k)}:{_vec(p)}" for k, p in rec.agents.items())
    discs = ",".join(f"{_key(k)}:[" + ",".join(_vec(d) for d in ds) + "]" for k, ds in rec.discs.items())
    return (
        "{"
        f'"t":{fmt(rec.sim_time)},'
        f'"robot":{_vec(rec.robot)},'
        f'"u":{_vec(rec.control)},'
        f'"agents":{{{agents}}},'
        f'"discs":{{{discs}}},'
        f'"cost":{fmt(rec.selected_cost)},'
        f'"disp":{fmt(rec.selected_displacement)},'
        f'"min_h":{fmt(rec.min_h)},'
        f'"tree":{int(rec.tree_size)},'
        f'"inserted":{int(rec.inserted)}'
        "}"
    )


def _json_value(v: Any) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt(v)
    if isinstance(v, (tuple, list)):
        return "[" + ",".join(_json_value(x) for x in v) + "]"
    if isinstance(v, Mapping):
        return "{" + ",".join(f"{_key(k)}:{_json_value(x)}" for k, x in v.items()) + "}"
    return json.dumps(str(v))


def make_header(scenario: str, params: PlannerParams, outcome: SimOutcome | None = None) -> dict[str, Any]:
    head: dict[str, Any] = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "scenario": scenario,
        "params": dataclasses.asdict(params),
    }
    if outcome is not None:
        head["outcome"] = {
            "status": outcome.status,
            "time_to_goal": outcome.time_to_goal,
            "min_h": outcome.min_h,
            "min_clearance": outcome.min_clearance,
            "steps": outcome.steps,
        }
    return head


def emit_trace(trace: Sequence[TraceRecord], sink: IO[bytes], header: Mapping[str, Any] | None = None) -> int:
    """Write the header line and one line per record; returns bytes written."""
    head = dict(header) if header is not None else {"format": TRACE_FORMAT, "version": TRACE_VERSION}
    lines = [_json_value(head)]
    lines.extend(format_record(r) for r in trace)
    data = ("\n".join(lines) + "\n").encode("utf-8")
    sink.write(data)
    return len(data)


def read_trace(source: IO[bytes]) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Parse a trace back into its header and a list of plain-dict records."""
    lines = source.read().decode("utf-8").splitlines()
    if not lines:
        raise ValueError("empty trace")
    head = json.loads(lines[0])
    if head.get("format") != TRACE_FORMAT:
        raise ValueError("not a trace file")
    return head, [json.loads(line) for line in lines[1:] if line]


def emit_plot_data(trace: Sequence[TraceRecord], sink: IO[bytes]) -> int:
    """CSV with one row per step: time, v, omega, min_h (empty cell for +inf)."""
    rows = [",".join(PLOT_COLUMNS)]
    for r in trace:
        h = "" if r.min_h == math.inf else fmt(r.min_h)
        rows.append(f"{fmt(r.sim_time)},{fmt(r.control.v)},{fmt(r.control.omega)},{h}")
    data = ("\n".join(rows) + "\n").encode("utf-8")
    sink.write(data)
    return len(data)


def emit_occupancy(maps: Mapping[Any, Sequence[OccupancyMap]], sink: IO[bytes], p_o: float | None = None) -> int:
    """Dense occupancy maps, one JSON line per (agent, step).

    Each line holds the grid origin, cell size, shape and the cell
    probabilities row by row (row index along y). With ``p_o`` set the
    extracted level-set disc is included too.
    """
    from .prediction import extract_disc

    lines = []
    for aid, seq in maps.items():
        for occ in seq:
            cells = np.asarray(occ.cells)
            rec = {
                "agent": str(aid),
                "step": int(occ.step),
                "t": float(occ.timestamp),
                "origin": [float(occ.origin[0]), float(occ.origin[1])],
                "cell": float(occ.cell_size),
                "shape": [int(cells.shape[0]), int(cells.shape[1])],
                "cells": [[float(x) for x in row] for row in cells],
            }
            if p_o is not None:
                d = extract_disc(occ, p_o)
                rec["disc"] = None if d.vacuous else [d.center[0], d.center[1], d.radius]
            lines.append(_json_value(rec))
    data = "".join(line + "\n" for line in lines).encode("utf-8")
    sink.write(data)
    return len(data)
