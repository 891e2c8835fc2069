"""Planner and controller parameters."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping


@dataclass(frozen=True)
class PlannerParams:
    T_s: float = 0.1  # cycle and integration step [s]
    N_s: int = 7  # Euler steps per tree edge
    N_o: int = 10  # prediction horizon [steps]
    a1: float = 1.0  # cost weight on distance to goal
    a2: float = 1.5  # cost weight on safety
    sigma_theta: float = 1.0
    a_omega: float = 0.2
    ell: float = 0.1  # look-ahead offset [m]
    beta: float = 100.0
    decay_cap: float | None = 0.5  # steer with min(beta, decay_cap / T_s); None uses beta as is
    r_r: float = 0.25  # robot radius [m]
    v_max: float = 0.33
    omega_max: float = 0.3
    v_min: float = 0.0  # QP lower bound on v (braking allowed)
    v_sample_min: float = 0.2  # lower end of the v_ref sampling range
    H: tuple[float, float] = (1e5, 1e5)
    p_o: float = 0.2
    cutoff: float = 5.0  # only obstacles this close produce rows [m]
    h_floor: float = 1e-3
    h_cap: float | None = None  # saturate h in the vertex cost; None leaves it unbounded
    node_budget: int = 20  # vertices inserted per cycle (simulation mode)
    max_attempts: int = 60  # grow attempts per cycle (simulation mode)
    deadline: float | None = None  # wall-clock budget per cycle [s]; overrides node budget
    commit_horizon: int = 1  # controls executed per planning cycle
    seed: int = 0
    # prediction
    samples: int = 256  # sampled pedestrian trajectories per agent
    cell_size: float = 0.1  # occupancy grid resolution [m]
    agent_radius: float = 0.25  # assumed pedestrian body radius added to predicted discs [m]

    def __post_init__(self):
        for name in ("T_s", "a1", "a2", "sigma_theta", "a_omega", "ell", "beta", "r_r", "v_max", "omega_max", "p_o", "cutoff", "h_floor", "cell_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.N_s < 1 or self.N_o < 1:
            raise ValueError("N_s and N_o must be >= 1")
        if not 0 <= self.v_min <= self.v_sample_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_sample_min <= v_max")
        if self.samples < 1 or self.agent_radius < 0:
            raise ValueError("samples must be >= 1 and agent_radius >= 0")
        if self.node_budget < 0 or self.max_attempts < 0:
            raise ValueError("budgets must be non-negative")
        if not 1 <= self.commit_horizon <= self.N_s:
            raise ValueError("commit_horizon must lie in [1, N_s]")
        if any(h < 0 for h in self.H):
            raise ValueError("H entries must be non-negative")
        if self.h_cap is not None and not self.h_cap >= self.h_floor:
            raise ValueError("h_cap must be at least h_floor")
        if self.decay_cap is not None and not 0 < self.decay_cap <= 1:
            raise ValueError("decay_cap must lie in (0, 1]")

    def replace(self, **changes: Any) -> "PlannerParams":
        return dataclasses.replace(self, **changes)

    @property
    def disc_padding(self) -> float:
        """Added to every predicted level-set radius: body plus half a cell diagonal."""
        return self.agent_radius + self.cell_size * math.sqrt(0.5)

    @property
    def steer_beta(self) -> float:
        """Class-K gain used in steering.

        An Euler step of length ``T_s`` lets ``h`` shrink by up to
        ``beta * T_s * h`` to first order, so a gain above ``1 / T_s`` can
        step straight through the boundary. Capping it at ``decay_cap / T_s``
        keeps at least ``(1 - decay_cap) * h`` per step.
        """
        if self.decay_cap is None:
            return self.beta
        return min(self.beta, self.decay_cap / self.T_s)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PlannerParams)}


def coerce_param(name: str, value: Any) -> Any:
    """Convert a raw override (string or JSON value) to the field's type."""
    if name not in FIELD_TYPES:
        raise KeyError(f"unknown parameter {name!r}")
    default = getattr(PlannerParams(), name)
    if name == "H":
        if isinstance(value, str):
            value = value.replace(",", " ").split()
        hv, hw = (float(x) for x in value)
        return (hv, hw)
    if name in ("deadline", "decay_cap", "h_cap"):
        return None if value in (None, "none", "None") else float(value)
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"{name}: expected a boolean, got {value!r}")
            return value.lower() in ("true", "1")
        return bool(value)
    if isinstance(default, int):
        f = float(value)
        if f != int(f):
            raise ValueError(f"{name}: expected an integer, got {value!r}")
        return int(f)
    f = float(value)
    if not math.isfinite(f):
        raise ValueError(f"{name}: expected a finite number")
    return f


def apply_overrides(params: PlannerParams, overrides: Mapping[str, Any]) -> PlannerParams:
    return params.replace(**{k: coerce_param(k, v) for k, v in overrides.items()})


def load_params_file(path: str | Path, base: PlannerParams | None = None) -> PlannerParams:
    """Read a JSON object of overrides."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("parameter file must hold a JSON object")
    return apply_overrides(base or PlannerParams(), data)
