"""Planar poses, twists and robot limits shared across the workbench."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Segments shorter than this are treated as degenerate (robot idling).
EPS_LEN = 1e-9


class DegenerateSegment(ValueError):
    """Raised when an angle is requested for a (near) zero-length vector."""


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`normalize_angle`."""
    a = np.fmod(a, 2.0 * np.pi)
    a = np.where(a <= -np.pi, a + 2.0 * np.pi, a)
    return np.where(a > np.pi, a - 2.0 * np.pi, a)


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def compose(self, other: Pose2D) -> Pose2D:
        return compose(self, other)

    def inverse(self) -> Pose2D:
        return inverse(self)

    def transform_point(self, px: float, py: float) -> tuple[float, float]:
        """Map a point from this pose's frame into the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Rigid-body composition ``a o b`` (b expressed in a's frame)."""
    x, y = a.transform_point(b.x, b.y)
    return Pose2D(x, y, a.theta + b.theta)


def inverse(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2D(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    omega: float = 0.0


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class RobotSpec:
    """Kinematic and dynamic limits of the mobile base.

    ``mount_offset`` is the nominal end-effector position expressed in the
    base frame (meters).
    """

    v_max: float = 1.0
    v_min: float = 0.0
    omega_max: float = 1.0
    a_lin_max: float = 0.5
    a_ang_max: float = 1.5
    footprint_radius: float = 0.35
    mount_offset: tuple[float, float, float] = field(default=(0.2, 0.0, 1.1))

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.a_lin_max <= 0:
            raise ValueError("a_lin_max must be positive")
        if self.footprint_radius <= 0:
            raise ValueError("footprint_radius must be positive")
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")

    def clamp(self, twist: Twist) -> Twist:
        return Twist(
            min(max(twist.v, self.v_min), self.v_max),
            min(max(twist.omega, -self.omega_max), self.omega_max),
        )


def angle_between(u, v) -> float:
    """Unsigned angle in [0, pi] between two 2-vectors.

    Both vectors are normalised before the dot product, so the result is
    exactly scale invariant.
    """
    ux, uy = float(u[0]), float(u[1])
    vx, vy = float(v[0]), float(v[1])
    nu = math.hypot(ux, uy)
    nv = math.hypot(vx, vy)
    if nu <= EPS_LEN or nv <= EPS_LEN:
        raise DegenerateSegment(f"segment shorter than {EPS_LEN} m")
    ux, uy = ux / nu, uy / nu
    vx, vy = vx / nv, vy / nv
    d = ux * vx + uy * vy
    return math.acos(min(1.0, max(-1.0, d)))
