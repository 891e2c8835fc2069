"""Unicycle kinematics, the look-ahead point transform, and goal regions."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    r = (a + math.pi) % TWO_PI - math.pi
    if r >= math.pi:
        r -= TWO_PI
    return r


def angle_diff(a: float, b: float) -> float:
    """Shortest signed angular distance a - b, in [-pi, pi)."""
    return wrap_angle(a - b)


class RobotState(NamedTuple):
    """Planar pose of the unicycle; theta is kept in [-pi, pi)."""

    x: float
    y: float
    theta: float

    @classmethod
    def make(cls, x: float, y: float, theta: float) -> "RobotState":
        return cls(float(x), float(y), wrap_angle(float(theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class ControlInput(NamedTuple):
    """Linear velocity v (m/s) and angular velocity omega (rad/s)."""

    v: float
    omega: float


ZERO_CONTROL = ControlInput(0.0, 0.0)


class TransformedState(NamedTuple):
    """Look-ahead point ``ell`` metres in front of the axle, plus heading."""

    x_t: float
    y_t: float
    theta: float
    ell: float


class GoalRegion(NamedTuple):
    center: tuple[float, float]
    radius: float

    def validate(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"goal radius must be positive, got {self.radius}")


def integrate_unicycle(state: RobotState, u: ControlInput, dt: float) -> RobotState:
    """One explicit Euler step of the unicycle model."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = state.theta
    return RobotState(
        state.x + dt * u.v * math.cos(th),
        state.y + dt * u.v * math.sin(th),
        wrap_angle(th + dt * u.omega),
    )


def to_transformed(state: RobotState, ell: float) -> TransformedState:
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    th = state.theta
    return TransformedState(state.x + ell * math.cos(th), state.y + ell * math.sin(th), th, ell)


def transformed_input_matrix(state: TransformedState) -> np.ndarray:
    """Input matrix of the look-ahead point dynamics (3x2).

    The upper 2x2 block has determinant ``ell``, so both inputs act on the
    point's position with relative degree one.
    """
    c, s, ell = math.cos(state.theta), math.sin(state.theta), state.ell
    return np.array([[c, -ell * s], [s, ell * c], [0.0, 1.0]])


def in_goal(state: RobotState, goal: GoalRegion) -> bool:
    dx = state.x - goal.center[0]
    dy = state.y - goal.center[1]
    return dx * dx + dy * dy <= goal.radius * goal.radius


def goal_distance(state: RobotState, goal: GoalRegion) -> float:
    """Euclidean distance from the state's position to the goal disc (0 inside)."""
    d = math.hypot(state.x - goal.center[0], state.y - goal.center[1])
    return max(0.0, d - goal.radius)


def bearing(from_xy: tuple[float, float], to_xy: tuple[float, float]) -> float:
    return wrap_angle(math.atan2(to_xy[1] - from_xy[1], to_xy[0] - from_xy[0]))
