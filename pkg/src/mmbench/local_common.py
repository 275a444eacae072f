"""Pieces shared by the local planners: sensed obstacles, path lookup, stuck detection."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core_types import Pose2D, RobotSpec, Twist, normalize_angle
from .global_planner import GlobalPath

GOAL_XY_TOLERANCE = 0.15
GOAL_YAW_TOLERANCE = 0.2


class Stuck(RuntimeError):
    """The local planner cannot make progress; the harness should re-plan."""


class ObstacleField:
    """Nearest-point queries against a sensed obstacle point set."""

    def __init__(self, points=None):
        pts = np.zeros((0, 2)) if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
        self.points = pts
        self._tree = cKDTree(pts) if len(pts) else None

    def __len__(self) -> int:
        return len(self.points)

    def distance(self, xy: np.ndarray, upper: float = np.inf) -> np.ndarray:
        """Distance from each query point (``(..., 2)``) to its nearest obstacle point.

        Distances beyond ``upper`` come back as ``inf`` (much faster queries).
        """
        xy = np.asarray(xy, dtype=float)
        if self._tree is None:
            return np.full(xy.shape[:-1], np.inf)
        d, _ = self._tree.query(xy.reshape(-1, 2), distance_upper_bound=upper)
        return d.reshape(xy.shape[:-1])

    def nearest(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distances and nearest points for each query point."""
        xy = np.asarray(xy, dtype=float)
        if self._tree is None:
            shape = xy.shape[:-1]
            return np.full(shape, np.inf), np.full(xy.shape, np.inf)
        d, i = self._tree.query(xy.reshape(-1, 2))
        return d.reshape(xy.shape[:-1]), self.points[i].reshape(xy.shape)


def padded_radius(obstacles: ObstacleField, pose: Pose2D, radius: float, padding: float) -> float:
    """Collision threshold for the footprint grown by ``padding``.

    A robot already inside the padding may keep its clearance but not lose
    more, so it can still turn or back out of a tight spot.
    """
    if padding <= 0 or len(obstacles) == 0:
        return radius
    d0 = float(obstacles.distance(pose.xy[None])[0])
    return min(radius + padding, max(d0 - 1e-9, radius))


class PathLookup:
    """Densified global path with nearest-point and remaining-length queries.

    ``goal`` is the exact goal pose; the path itself ends at the centre of
    the goal cell. It defaults to the path's last waypoint.
    """

    def __init__(self, path: GlobalPath, step: float = 0.05, goal: Optional[Pose2D] = None):
        self.path = path
        self._goal = goal if goal is not None else path.goal
        self.points, self.s = path.densify(step)
        self.length = path.length
        self._tree = cKDTree(self.points)

    @property
    def goal(self) -> Pose2D:
        return self._goal

    def project(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the path and arc length of the nearest path point."""
        xy = np.asarray(xy, dtype=float)
        d, i = self._tree.query(xy.reshape(-1, 2))
        return d.reshape(xy.shape[:-1]), self.s[i].reshape(xy.shape[:-1])

    def remaining(self, xy: np.ndarray) -> np.ndarray:
        _, s = self.project(xy)
        return self.length - s

    def bearing(self, pose: Pose2D, ahead: float) -> float:
        """Direction from ``pose`` to the path point ``ahead`` meters past its projection."""
        _, s = self.project(pose.xy[None])
        x, y, heading = self.path.point_at(min(float(s[0]) + ahead, self.length))
        if math.hypot(x - pose.x, y - pose.y) < 1e-6:
            return heading
        return math.atan2(y - pose.y, x - pose.x)


def at_goal(pose: Pose2D, goal: Pose2D, xy_tol: float = GOAL_XY_TOLERANCE,
            yaw_tol: float = GOAL_YAW_TOLERANCE) -> bool:
    return (np.hypot(pose.x - goal.x, pose.y - goal.y) <= xy_tol
            and abs(normalize_angle(pose.theta - goal.theta)) <= yaw_tol)


def rotate_to_heading(pose: Pose2D, twist: Twist, goal: Pose2D, spec: RobotSpec,
                      dt_ctrl: float, gain: float = 1.5) -> Twist:
    """Brake and turn toward the goal heading, within one control period's
    acceleration limits. Used once the position is inside tolerance."""
    dv = spec.a_lin_max * dt_ctrl
    dw = spec.a_ang_max * dt_ctrl
    v = min(max(0.0, twist.v - dv), twist.v + dv)
    w = gain * normalize_angle(goal.theta - pose.theta)
    w = min(max(w, twist.omega - dw, -spec.omega_max), twist.omega + dw, spec.omega_max)
    return Twist(v, w)


@dataclass
class ProgressMonitor:
    """Flags lack of progress: remaining distance to the goal has not
    dropped by ``min_progress`` over the trailing ``window`` seconds."""

    window: float = 3.0
    min_progress: float = 0.05

    def __post_init__(self):
        self._hist: deque[tuple[float, float]] = deque()

    def reset(self) -> None:
        self._hist.clear()

    def update(self, t: float, remaining: float) -> bool:
        self._hist.append((t, remaining))
        while len(self._hist) > 1 and t - self._hist[1][0] >= self.window - 1e-9:
            self._hist.popleft()
        t0, r0 = self._hist[0]
        if t - t0 < self.window - 1e-9:
            return False
        return r0 - remaining < self.min_progress
