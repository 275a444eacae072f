"""Timed-elastic-band local planner.

A band of poses with per-segment time intervals is seeded from the global
path and deformed every control cycle by a damped least-squares solver
(numeric central-difference Jacobian) over time, obstacle, non-holonomic,
velocity and acceleration residuals. The first band segment yields the
command sent to the base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core_types import Pose2D, RobotSpec, Twist, normalize_angle, normalize_angles
from .global_planner import GlobalPath
from .local_common import (GOAL_XY_TOLERANCE, GOAL_YAW_TOLERANCE, ObstacleField, PathLookup,
                           ProgressMonitor, Stuck, at_goal, padded_radius,
                           rotate_to_heading)
from .world_sim import DT_CTRL

DT_FLOOR = 1e-3
LAMBDA_MAX = 1e8
JACOBIAN_STEP = 1e-6
RESEED_DRIFT = 0.5
# damping grows until the predicted relative decrease falls below this
CONVERGED = 1e-6
# inside the goal tolerance the band is followed while the goal is this far ahead
FINAL_APPROACH = 0.03


@dataclass(frozen=True)
class TebConfig:
    w_time: float = 1.0
    w_obs: float = 50.0
    w_kin: float = 1000.0
    w_vel: float = 2.0
    w_acc: float = 1.0
    min_obstacle_distance: Optional[float] = None  # None: footprint radius + 0.1 m
    iterations: int = 8
    damping: float = 1e-2
    horizon_length: float = 3.0
    resolution: float = 0.3
    stuck_window: float = 3.0
    stuck_progress: float = 0.05
    # hard footprint check on the band prefix the robot is committed to
    footprint_padding: float = 0.02

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.min_obstacle_distance is not None and self.min_obstacle_distance <= 0:
            raise ValueError("min_obstacle_distance must be positive")
        if self.damping <= 0:
            raise ValueError("damping must be positive")
        if min(self.w_time, self.w_obs, self.w_kin, self.w_vel, self.w_acc) < 0:
            raise ValueError("weights must be non-negative")

    def clearance(self, spec: RobotSpec) -> float:
        if self.min_obstacle_distance is None:
            return spec.footprint_radius + 0.1
        return self.min_obstacle_distance


@dataclass(frozen=True)
class Band:
    """Band vertices ``poses`` (V, 3) and intervals ``dts`` (V-1,).

    ``v_start`` / ``v_end`` (and the angular ``w_start`` / ``w_end``)
    optionally pin the velocity at either end for the acceleration residuals:
    the robot's current twist at the start, rest at the goal.
    """

    poses: np.ndarray
    dts: np.ndarray
    v_start: Optional[float] = None
    v_end: Optional[float] = None
    w_start: Optional[float] = None
    w_end: Optional[float] = None

    def __post_init__(self):
        if len(self.poses) < 3:
            raise ValueError("band needs at least 3 poses")
        if len(self.dts) != len(self.poses) - 1:
            raise ValueError("need exactly one dt per segment")

    @property
    def n_poses(self) -> int:
        return len(self.poses)

    @property
    def total_time(self) -> float:
        return float(np.sum(self.dts))

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self.poses[:, :2], axis=0).T).sum())

    # free variables: interior vertex coordinates then every dt
    def pack(self) -> np.ndarray:
        return np.concatenate([self.poses[1:-1].ravel(), self.dts])

    def unpack(self, x: np.ndarray) -> Band:
        k = 3 * (self.n_poses - 2)
        poses = self.poses.copy()
        poses[1:-1] = x[:k].reshape(-1, 3)
        return replace(self, poses=poses, dts=x[k:].copy())


# --------------------------------------------------------------------------
# Seeding
# --------------------------------------------------------------------------


def _initial_dts(poses: np.ndarray, spec: RobotSpec) -> np.ndarray:
    seg = np.hypot(*np.diff(poses[:, :2], axis=0).T)
    return np.maximum(seg / spec.v_max, 10.0 * DT_FLOOR)


def seed_band(path: GlobalPath, current: Pose2D, cfg: TebConfig, spec: RobotSpec,
              v_start: Optional[float] = None, lookup: Optional[PathLookup] = None,
              w_start: Optional[float] = None) -> Band:
    """Vertices every ``cfg.resolution`` meters along the path ahead of ``current``."""
    lookup = lookup or PathLookup(path)
    L = path.length
    _, s0 = lookup.project(current.xy[None])
    s0 = float(s0[0])
    s_end = min(s0 + cfg.horizon_length, L)
    reaches_goal = s_end >= L - 1e-9
    ss = []
    s = s0 + cfg.resolution
    while s < s_end - 1e-9:
        ss.append(s)
        s += cfg.resolution
    pts = [current.as_array()]
    pts += [np.array(path.point_at(s)) for s in ss]
    pts.append(lookup.goal.as_array() if reaches_goal else np.array(path.point_at(s_end)))
    if len(pts) == 2:
        a, b = pts
        mid = 0.5 * (a + b)
        mid[2] = a[2] + 0.5 * normalize_angle(b[2] - a[2])
        pts.insert(1, mid)
    poses = np.array(pts)
    poses[:, 2] = normalize_angles(poses[:, 2])
    end = 0.0 if reaches_goal else None
    return Band(poses, _initial_dts(poses, spec), v_start, end, w_start, end)


# --------------------------------------------------------------------------
# Residuals
# --------------------------------------------------------------------------


def _hinge(x):
    return np.maximum(x, 0.0)


def _rate_changes(u: np.ndarray, D: np.ndarray, start: Optional[float],
                  end: Optional[float]) -> np.ndarray:
    """Finite-difference accelerations of per-segment rates, plus boundary terms."""
    acc = [(u[:, 1:] - u[:, :-1]) / (0.5 * (D[:, 1:] + D[:, :-1]))]
    if start is not None:
        acc.insert(0, ((u[:, 0] - start) / D[:, 0])[:, None])
    if end is not None:
        acc.append(((end - u[:, -1]) / D[:, -1])[:, None])
    return np.concatenate(acc, axis=1)


def residual_batch(P: np.ndarray, D: np.ndarray, ends: Band, obstacles: ObstacleField,
                   cfg: TebConfig, spec: RobotSpec) -> np.ndarray:
    """Stacked residuals for a batch of bands: P (B, V, 3), D (B, V-1) -> (B, R).

    Boundary velocities are read from ``ends``.
    """
    dx = P[:, 1:, 0] - P[:, :-1, 0]
    dy = P[:, 1:, 1] - P[:, :-1, 1]
    th = P[:, :, 2]
    c, s = np.cos(th), np.sin(th)
    seg = np.hypot(dx, dy)

    r_time = math.sqrt(cfg.w_time) * D

    dist = obstacles.distance(P[:, :, :2], upper=cfg.clearance(spec))
    r_obs = math.sqrt(cfg.w_obs) * _hinge(cfg.clearance(spec) - dist)

    r_kin = math.sqrt(cfg.w_kin) * ((c[:, :-1] + c[:, 1:]) * dy - (s[:, :-1] + s[:, 1:]) * dx)

    forward = dx * c[:, :-1] + dy * s[:, :-1]
    v = np.where(forward >= 0.0, 1.0, -1.0) * seg / D
    r_v = math.sqrt(cfg.w_vel) * (_hinge(v - spec.v_max) + _hinge(spec.v_min - v))
    om = normalize_angles(th[:, 1:] - th[:, :-1]) / D
    r_w = math.sqrt(cfg.w_vel) * _hinge(np.abs(om) - spec.omega_max)

    acc = _rate_changes(v, D, ends.v_start, ends.v_end)
    r_acc = math.sqrt(cfg.w_acc) * _hinge(np.abs(acc) - spec.a_lin_max)
    alpha = _rate_changes(om, D, ends.w_start, ends.w_end)
    r_alpha = math.sqrt(cfg.w_acc) * _hinge(np.abs(alpha) - spec.a_ang_max)

    return np.concatenate([r_time, r_obs, r_kin, r_v, r_w, r_acc, r_alpha], axis=1)


def residuals(band: Band, obstacles: ObstacleField, cfg: TebConfig, spec: RobotSpec) -> np.ndarray:
    return residual_batch(band.poses[None], band.dts[None], band, obstacles, cfg, spec)[0]


def residual_blocks(band: Band) -> dict[str, slice]:
    """Index ranges of each residual family inside :func:`residuals`' output."""
    V = band.n_poses
    sizes = [("time", V - 1), ("obstacle", V), ("kinematic", V - 1), ("velocity", V - 1),
             ("angular", V - 1),
             ("acceleration", V - 2 + (band.v_start is not None) + (band.v_end is not None)),
             ("angular_acceleration",
              V - 2 + (band.w_start is not None) + (band.w_end is not None))]
    out, i = {}, 0
    for name, n in sizes:
        out[name] = slice(i, i + n)
        i += n
    return out


def cost(band: Band, obstacles: ObstacleField, cfg: TebConfig, spec: RobotSpec) -> float:
    r = residuals(band, obstacles, cfg, spec)
    return float(r @ r)


def _batch_from_x(band: Band, X: np.ndarray):
    B = X.shape[0]
    V = band.n_poses
    k = 3 * (V - 2)
    P = np.broadcast_to(band.poses, (B, V, 3)).copy()
    P[:, 1:-1] = X[:, :k].reshape(B, V - 2, 3)
    return P, X[:, k:]


def _residual_x(band: Band, X: np.ndarray, obstacles, cfg, spec) -> np.ndarray:
    P, D = _batch_from_x(band, np.atleast_2d(X))
    return residual_batch(P, D, band, obstacles, cfg, spec)


def numeric_jacobian(band: Band, obstacles: ObstacleField, cfg: TebConfig, spec: RobotSpec,
                     h: float = JACOBIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian of :func:`residuals` w.r.t. the free variables."""
    x = band.pack()
    n = len(x)
    E = h * np.eye(n)
    R = _residual_x(band, np.vstack([x + E, x - E]), obstacles, cfg, spec)
    return ((R[:n] - R[n:]) / (2.0 * h)).T


# --------------------------------------------------------------------------
# Optimisation
# --------------------------------------------------------------------------


@dataclass
class OptimizeResult:
    band: Band
    initial_cost: float
    final_cost: float
    accepted: int = 0
    stuck: bool = False
    costs: list[float] = field(default_factory=list)


def _clean(band: Band, x: np.ndarray) -> np.ndarray:
    k = 3 * (band.n_poses - 2)
    x = x.copy()
    x[2:k:3] = normalize_angles(x[2:k:3])
    x[k:] = np.maximum(x[k:], DT_FLOOR)
    return x


def optimize(band: Band, obstacles: ObstacleField, cfg: TebConfig, spec: RobotSpec) -> OptimizeResult:
    """Levenberg-style damped least squares on the band's free variables.

    Every accepted step strictly lowers the cost. An iteration ends without
    a step once the damped model predicts a negligible relative decrease
    (converged). When the damping instead has to exceed ``LAMBDA_MAX`` before
    any step is accepted, the input band is returned with ``stuck`` set.
    """
    x = band.pack()
    r = _residual_x(band, x, obstacles, cfg, spec)[0]
    c0 = float(r @ r)
    c = c0
    lam = cfg.damping
    costs = [c0]
    accepted = 0
    stuck = False
    for _ in range(cfg.iterations):
        J = numeric_jacobian(band.unpack(x), obstacles, cfg, spec)
        g = J.T @ r
        if c <= 1e-14 or not np.any(np.abs(g) > 1e-12):
            break
        A = J.T @ J
        diag = np.eye(len(x))
        step_taken = converged = False
        while lam <= LAMBDA_MAX:
            try:
                delta = np.linalg.solve(A + lam * diag, -g)
            except np.linalg.LinAlgError:
                lam *= 2.0
                continue
            if -(g @ delta) - 0.5 * delta @ A @ delta <= CONVERGED * c:
                converged = True
                break
            xn = _clean(band, x + delta)
            rn = _residual_x(band, xn, obstacles, cfg, spec)[0]
            cn = float(rn @ rn)
            if cn < c:
                x, r, c = xn, rn, cn
                lam = max(lam * 0.5, 1e-12)
                accepted += 1
                costs.append(c)
                step_taken = True
                break
            lam *= 2.0
        if not step_taken:
            stuck = accepted == 0 and not converged
            break
    if stuck:
        return OptimizeResult(band, c0, c0, 0, True, [c0])
    return OptimizeResult(band.unpack(x), c0, c, accepted, False, costs)


def band_feasible(band: Band, obstacles: ObstacleField, spec: RobotSpec, speed: float,
                  margin: float, padding: float = 0.0) -> bool:
    """Hard footprint check of the band prefix the robot needs to stop.

    Vertices are checked up to the stopping distance at ``speed`` plus
    ``margin``; segments longer than the footprint radius get intermediate
    samples so the footprint cannot jump over a thin obstacle.
    """
    if len(obstacles) == 0:
        return True
    reach = speed * speed / (2.0 * spec.a_lin_max) + margin
    xy = band.poses[:, :2]
    seg = np.hypot(*np.diff(xy, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    last = min(int(np.searchsorted(cum, reach)), len(xy) - 1)
    pts = [xy[:1]]
    for i in range(last):
        n = max(int(math.ceil(seg[i] / spec.footprint_radius)), 1)
        u = np.arange(1, n + 1)[:, None] / n
        pts.append(xy[i] + u * (xy[i + 1] - xy[i]))
    r = padded_radius(obstacles, Pose2D(*band.poses[0]), spec.footprint_radius, padding)
    return bool(np.all(obstacles.distance(np.vstack(pts), upper=2 * r) > r))


def control_from_band(band: Band, spec: RobotSpec, lookahead: float = 0.0) -> Twist:
    """Command implied by the band's leading segments, clamped to the limits.

    Segments are accumulated until they span at least ``lookahead`` seconds
    (always at least one), so a nearly consumed first segment cannot turn a
    small heading difference into a large angular rate. A band ending at
    rest caps the speed so the remaining band length still suffices to brake.
    """
    k = 1
    while k < len(band.dts) and float(np.sum(band.dts[:k])) < lookahead:
        k += 1
    P = band.poses[:k + 1]
    T = float(np.sum(band.dts[:k]))
    d = np.diff(P[:, :2], axis=0)
    along = d[:, 0] * np.cos(P[:-1, 2]) + d[:, 1] * np.sin(P[:-1, 2])
    seg = np.hypot(d[:, 0], d[:, 1]) * np.where(along >= 0.0, 1.0, -1.0)
    v = float(np.sum(seg)) / T
    w = normalize_angle(P[-1, 2] - P[0, 2]) / T
    if band.v_end == 0.0:
        # the acceleration terms are soft; never outrun the stopping distance
        v_stop = math.sqrt(2.0 * spec.a_lin_max * band.length)
        v = min(max(v, -v_stop), v_stop)
    return spec.clamp(Twist(v, w))


# --------------------------------------------------------------------------
# Planner
# --------------------------------------------------------------------------


class TebPlanner:
    """Keeps a warm-started band across control cycles."""

    name = "teb"

    def __init__(self, spec: RobotSpec, cfg: TebConfig = TebConfig(), dt_ctrl: float = DT_CTRL,
                 xy_tol: float = GOAL_XY_TOLERANCE, yaw_tol: float = GOAL_YAW_TOLERANCE):
        self.spec = spec
        self.cfg = cfg
        self.dt_ctrl = dt_ctrl
        self.xy_tol = xy_tol
        self.yaw_tol = yaw_tol
        self.monitor = ProgressMonitor(cfg.stuck_window, cfg.stuck_progress)
        self.lookup: Optional[PathLookup] = None
        self.band: Optional[Band] = None
        self.last_result: Optional[OptimizeResult] = None

    def set_path(self, path: GlobalPath, goal: Optional[Pose2D] = None) -> None:
        self.lookup = PathLookup(path, goal=goal)
        self.band = None
        self.monitor.reset()

    def _horizon_target(self, pose: Pose2D):
        path = self.lookup.path
        _, s0 = self.lookup.project(pose.xy[None])
        s_end = min(float(s0[0]) + self.cfg.horizon_length, path.length)
        if s_end >= path.length - 1e-9:
            return self.lookup.goal.as_array(), True
        return np.array(path.point_at(s_end)), False

    def _warm_start(self, band: Band, pose: Pose2D, twist: Twist) -> Band:
        res = self.cfg.resolution
        poses = band.poses.copy()
        dts = band.dts.copy()
        d = np.hypot(poses[:-1, 0] - pose.x, poses[:-1, 1] - pose.y)
        k = int(np.argmin(d))
        if k > 0:
            poses, dts = poses[k:], dts[k:]
        old_len = np.hypot(*(poses[1, :2] - poses[0, :2]))
        poses[0] = pose.as_array()
        new_len = np.hypot(*(poses[1, :2] - poses[0, :2]))
        if old_len > 1e-6:
            dts[0] = max(dts[0] * new_len / old_len, DT_FLOOR)
        target, at_end = self._horizon_target(pose)
        if np.hypot(*(target[:2] - poses[-1, :2])) > 1e-6 or abs(target[2] - poses[-1, 2]) > 1e-9:
            gap = np.hypot(*(target[:2] - poses[-1, :2]))
            if gap > 0.5 * res or len(poses) < 3:
                poses = np.vstack([poses, target])
                dts = np.append(dts, max(gap / self.spec.v_max, 10 * DT_FLOOR))
            else:
                poses[-1] = target
        # keep segment lengths near the resolution
        out_p = [poses[0]]
        out_d = []
        for i in range(1, len(poses)):
            seg = np.hypot(*(poses[i, :2] - out_p[-1][:2]))
            if seg > 1.5 * res:
                n = int(math.ceil(seg / res))
                a, b = out_p[-1], poses[i]
                dth = normalize_angle(b[2] - a[2])
                for j in range(1, n):
                    u = j / n
                    p = a + u * (b - a)
                    p[2] = normalize_angle(a[2] + u * dth)
                    out_p.append(p)
                    out_d.append(dts[i - 1] / n)
                out_p.append(poses[i])
                out_d.append(dts[i - 1] / n)
            elif seg < 0.5 * res and 0 < i < len(poses) - 1 and len(poses) > 3:
                # merge this interior vertex into the next segment
                dts[i] += dts[i - 1]
                continue
            else:
                out_p.append(poses[i])
                out_d.append(dts[i - 1])
        poses = np.array(out_p)
        dts = np.maximum(np.array(out_d), DT_FLOOR)
        if len(poses) < 3:
            mid = 0.5 * (poses[0] + poses[-1])
            mid[2] = poses[0, 2] + 0.5 * normalize_angle(poses[-1, 2] - poses[0, 2])
            poses = np.array([poses[0], mid, poses[-1]])
            dts = np.full(2, max(dts[0] / 2, DT_FLOOR))
        end = 0.0 if at_end else None
        return Band(poses, dts, twist.v, end, twist.omega, end)

    def step(self, t: float, pose: Pose2D, twist: Twist, obstacles: ObstacleField) -> Twist:
        goal = self.lookup.goal
        if at_goal(pose, goal, self.xy_tol, self.yaw_tol):
            return Twist(0.0, 0.0)
        ahead = (goal.x - pose.x) * math.cos(pose.theta) + (goal.y - pose.y) * math.sin(pose.theta)
        if math.hypot(pose.x - goal.x, pose.y - goal.y) <= self.xy_tol and ahead < FINAL_APPROACH:
            self.band = None
            return rotate_to_heading(pose, twist, goal, self.spec, self.dt_ctrl)
        remaining = float(self.lookup.remaining(pose.xy[None])[0])
        if self.monitor.update(t, remaining):
            self.monitor.reset()
            self.band = None
            raise Stuck("no progress toward the goal")
        if self.band is None or np.hypot(*(self.band.poses[0, :2] - pose.xy)) > RESEED_DRIFT:
            band = seed_band(self.lookup.path, pose, self.cfg, self.spec, twist.v, self.lookup,
                             twist.omega)
        else:
            band = self._warm_start(self.band, pose, twist)
        result = optimize(band, obstacles, self.cfg, self.spec)
        self.last_result = result
        if result.stuck:
            self.band = None
            raise Stuck("band optimisation could not make progress")
        if not band_feasible(result.band, obstacles, self.spec, abs(twist.v), self.cfg.resolution,
                             self.cfg.footprint_padding):
            self.band = None
            raise Stuck("band runs into an obstacle")
        self.band = result.band
        return control_from_band(result.band, self.spec, self.dt_ctrl)
