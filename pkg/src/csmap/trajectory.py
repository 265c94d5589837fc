"""Terminal motion models and the ground-truth position oracle.

The coordinate-measurement instrument of the hardware experiments is modeled
as direct evaluation of these trajectories: the simulator's ground truth IS
the tracked position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class TrajectoryKind(str, Enum):
    STATIC = "static"
    LINEAR_BACK_AND_FORTH = "linear_back_and_forth"
    CIRCULAR = "circular"
    WAYPOINTS = "waypoints"


@dataclass(frozen=True)
class Trajectory:
    kind: TrajectoryKind = TrajectoryKind.STATIC
    position: tuple[float, float] = (0.0, 0.0)  # static / line start
    end: tuple[float, float] = (0.0, 0.0)  # line end
    speed: float = 0.0  # m/s along the path
    center: tuple[float, float] = (0.0, 0.0)  # circular
    radius: float = 0.0
    start_angle: float = 0.0  # rad
    waypoints: tuple = ()  # ((t, x, y), ...) sorted by t

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if self.kind is TrajectoryKind.CIRCULAR and self.radius <= 0:
            raise ValueError("circular trajectory needs radius > 0")
        if self.kind is TrajectoryKind.WAYPOINTS and len(self.waypoints) < 2:
            raise ValueError("waypoints trajectory needs at least 2 points")


def trajectory_position(traj: Trajectory, t: float) -> tuple[float, float]:
    """Position at time t; back-and-forth reverses at the endpoints."""
    if traj.kind is TrajectoryKind.STATIC:
        return traj.position
    if traj.kind is TrajectoryKind.LINEAR_BACK_AND_FORTH:
        x0, y0 = traj.position
        x1, y1 = traj.end
        length = math.hypot(x1 - x0, y1 - y0)
        if length == 0 or traj.speed == 0:
            return traj.position
        s = (traj.speed * t) % (2.0 * length)
        d = s if s <= length else 2.0 * length - s
        f = d / length
        return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
    if traj.kind is TrajectoryKind.CIRCULAR:
        omega = traj.speed / traj.radius
        angle = traj.start_angle + omega * t
        cx, cy = traj.center
        return (cx + traj.radius * math.cos(angle), cy + traj.radius * math.sin(angle))
    # Waypoints: piecewise-linear interpolation, clamped at the ends.
    points = traj.waypoints
    if t <= points[0][0]:
        return (points[0][1], points[0][2])
    for (t0, x0, y0), (t1, x1, y1) in zip(points, points[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
    return (points[-1][1], points[-1][2])


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
