"""Dynamic-Window local planner.

Velocities reachable within one control period are sampled on a grid, each
sample is rolled forward along its exact arc, inadmissible samples (those
that collide or cannot brake in time) are discarded, and the rest are scored
by four critics: path distance, goal distance, clearance and speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_types import Pose2D, RobotSpec, Twist, normalize_angle
from .global_planner import GlobalPath
from .local_common import (GOAL_XY_TOLERANCE, GOAL_YAW_TOLERANCE, ObstacleField, PathLookup,
                           ProgressMonitor, Stuck, at_goal, padded_radius,
                           rotate_to_heading)
from .world_sim import DT_CTRL, integrate_arc

BRAKE_SAMPLE_STEP = 0.05
# a (nearly) halted robot facing away from the path turns toward it first
ALIGN_SPEED = 0.1
ALIGN_ANGLE = math.pi / 3
ALIGN_LOOKAHEAD = 0.5


@dataclass(frozen=True)
class DwaConfig:
    v_samples: int = 11
    omega_samples: int = 21
    horizon: float = 2.0
    rollout_dt: float = 0.1
    w_path: float = 1.0
    w_goal: float = 0.8
    w_clearance: float = 0.3
    w_speed: float = 0.2
    clearance_cap: float = 1.0
    # margin absorbing scan discretisation between rays
    footprint_padding: float = 0.02
    stuck_window: float = 3.0
    stuck_progress: float = 0.05
    # "path": remaining length along the global path; "euclidean": straight line
    goal_metric: str = "path"
    heading_gain: float = 1.5

    def __post_init__(self):
        if self.v_samples < 2 or self.omega_samples < 2:
            raise ValueError("need at least 2 samples per axis")
        if not self.horizon > self.rollout_dt > 0:
            raise ValueError("require horizon > rollout_dt > 0")
        ws = (self.w_path, self.w_goal, self.w_clearance, self.w_speed)
        if self.footprint_padding < 0:
            raise ValueError("footprint_padding must be >= 0")
        if min(ws) < 0 or max(ws) <= 0:
            raise ValueError("weights must be >= 0 with at least one positive")
        if self.goal_metric not in ("path", "euclidean"):
            raise ValueError("goal_metric must be 'path' or 'euclidean'")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.rollout_dt))


@dataclass
class Rollout:
    candidate: Twist
    poses: np.ndarray  # (steps, 3)
    admissible: bool
    score: Optional[float] = None


def dynamic_window(current: Twist, spec: RobotSpec, dt_ctrl: float = DT_CTRL):
    """Velocity intervals reachable within one control period."""
    v_lo = max(spec.v_min, current.v - spec.a_lin_max * dt_ctrl)
    v_hi = min(spec.v_max, current.v + spec.a_lin_max * dt_ctrl)
    w_lo = max(-spec.omega_max, current.omega - spec.a_ang_max * dt_ctrl)
    w_hi = min(spec.omega_max, current.omega + spec.a_ang_max * dt_ctrl)
    # a state outside the limits still yields a non-empty window at the nearest bound
    if v_lo > v_hi:
        v_lo = v_hi = min(max(current.v, spec.v_min), spec.v_max)
    if w_lo > w_hi:
        w_lo = w_hi = min(max(current.omega, -spec.omega_max), spec.omega_max)
    return (v_lo, v_hi), (w_lo, w_hi)


def sample_grid(window, cfg: DwaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flattened candidate arrays, ordered by v (major) then omega (minor)."""
    (v_lo, v_hi), (w_lo, w_hi) = window
    vs = np.linspace(v_lo, v_hi, cfg.v_samples)
    ws = np.linspace(w_lo, w_hi, cfg.omega_samples)
    V, W = np.meshgrid(vs, ws, indexing="ij")
    return V.ravel(), W.ravel()


def rollout_poses(pose: Pose2D, v, omega, cfg: DwaConfig) -> np.ndarray:
    """Exact-arc poses at ``rollout_dt`` spacing over the horizon, shape (B, steps, 3)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))[:, None]
    w = np.atleast_1d(np.asarray(omega, dtype=float))[:, None]
    t = cfg.rollout_dt * np.arange(1, cfg.steps + 1)[None, :]
    x, y, th = integrate_arc(pose.x, pose.y, pose.theta, v, w, t)
    return np.stack(np.broadcast_arrays(x, y, th), axis=-1)


def _braking_points(pose: Pose2D, v: np.ndarray, w: np.ndarray, spec: RobotSpec):
    """Points along each candidate's arc up to its stopping distance, (B, M, 2)."""
    s_brake = v * v / (2.0 * spec.a_lin_max)
    if len(v) == 0:
        return np.zeros((0, 1, 2))
    m = max(int(math.ceil(float(np.max(s_brake, initial=0.0)) / BRAKE_SAMPLE_STEP)), 1)
    frac = np.arange(1, m + 1)[None, :] / m
    speed = np.where(np.abs(v) > 1e-12, np.abs(v), 1.0)[:, None]
    t = frac * s_brake[:, None] / speed
    x, y, _ = integrate_arc(pose.x, pose.y, pose.theta, v[:, None], w[:, None], t)
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


def admissible(start: Pose2D, poses: np.ndarray, obstacles: ObstacleField,
               candidate: Twist, spec: RobotSpec, horizon: Optional[float] = None,
               padding: float = 0.0) -> bool:
    """True unless the rollout from ``start`` touches an obstacle or the
    candidate cannot brake to a stop before one.

    The footprint is grown by ``padding`` for both checks.
    """
    poses = np.asarray(poses, dtype=float)[None]
    v = np.array([candidate.v])
    w = np.array([candidate.omega])
    return bool(admissible_batch(start, poses, v, w, obstacles, spec, horizon,
                                 padding=padding)[0])


def admissible_batch(start: Pose2D, poses: np.ndarray, v: np.ndarray, w: np.ndarray,
                     obstacles: ObstacleField, spec: RobotSpec, horizon: Optional[float] = None,
                     pose_dist: Optional[np.ndarray] = None,
                     padding: float = 0.0) -> np.ndarray:
    """Vectorised :func:`admissible`.

    When ``horizon`` is given, the braking check is skipped for candidates
    whose stopping distance lies within the arc the rollout already covers.
    The footprint padding is relaxed as in :func:`padded_radius`.
    """
    if len(obstacles) == 0:
        return np.ones(len(v), dtype=bool)
    r = padded_radius(obstacles, start, spec.footprint_radius, padding)
    if pose_dist is None:
        pose_dist = obstacles.distance(poses[..., :2], upper=2 * r)
    hit = (pose_dist <= r).any(axis=1)
    need = ~hit
    if horizon is not None:
        need &= v * v / (2.0 * spec.a_lin_max) > np.abs(v) * horizon
    if need.any():
        idx = np.flatnonzero(need)
        brake = _braking_points(start, v[idx], w[idx], spec)
        hit[idx] |= (obstacles.distance(brake, upper=2 * r) <= r).any(axis=1)
    return ~hit


@dataclass(frozen=True)
class ScoreContext:
    path: PathLookup
    goal: Pose2D
    obstacles: ObstacleField
    spec: RobotSpec
    cfg: DwaConfig


def clearance_upper(ctx_or_cfg, spec: RobotSpec) -> float:
    cfg = getattr(ctx_or_cfg, "cfg", ctx_or_cfg)
    return spec.footprint_radius + cfg.clearance_cap + 0.1


def score_rollouts(poses: np.ndarray, v: np.ndarray, ctx: ScoreContext,
                   pose_dist: Optional[np.ndarray] = None) -> np.ndarray:
    """Critic sum for a batch of rollouts (higher is better).

    ``pose_dist`` may carry precomputed obstacle distances of every rollout
    pose (queried with :func:`clearance_upper`).
    """
    cfg = ctx.cfg
    end = poses[:, -1, :2]
    d_path, s_proj = ctx.path.project(end)
    if cfg.goal_metric == "path":
        d_goal = ctx.path.length - s_proj
    else:
        d_goal = np.hypot(end[:, 0] - ctx.goal.x, end[:, 1] - ctx.goal.y)
    r = ctx.spec.footprint_radius
    if pose_dist is None:
        pose_dist = ctx.obstacles.distance(poses[..., :2], upper=clearance_upper(cfg, ctx.spec))
    clear = pose_dist.min(axis=1) - r
    clear = np.minimum(clear, cfg.clearance_cap)
    return (-cfg.w_path * d_path - cfg.w_goal * d_goal
            + cfg.w_clearance * clear + cfg.w_speed * np.abs(v))


def evaluate(pose: Pose2D, twist: Twist, path: PathLookup, obstacles: ObstacleField,
             cfg: DwaConfig, spec: RobotSpec, dt_ctrl: float = DT_CTRL) -> list[Rollout]:
    """Every rollout on the sample grid with admissibility and score."""
    v, w = sample_grid(dynamic_window(twist, spec, dt_ctrl), cfg)
    poses = rollout_poses(pose, v, w, cfg)
    ok = admissible_batch(pose, poses, v, w, obstacles, spec, cfg.horizon,
                          padding=cfg.footprint_padding)
    ctx = ScoreContext(path, path.goal, obstacles, spec, cfg)
    scores = score_rollouts(poses, v, ctx)
    return [Rollout(Twist(float(v[i]), float(w[i])), poses[i], bool(ok[i]),
                    float(scores[i]) if ok[i] else None) for i in range(len(v))]


def choose(pose: Pose2D, twist: Twist, path: PathLookup, obstacles: ObstacleField,
           cfg: DwaConfig, spec: RobotSpec, dt_ctrl: float = DT_CTRL,
           xy_tol: float = GOAL_XY_TOLERANCE, yaw_tol: float = GOAL_YAW_TOLERANCE) -> Twist:
    """Best admissible command on the sample grid.

    Ties resolve toward lower v, then lower omega. Raises :class:`Stuck` when
    no sample is admissible.
    """
    goal = path.goal
    if at_goal(pose, goal, xy_tol, yaw_tol):
        return Twist(0.0, 0.0)
    if math.hypot(pose.x - goal.x, pose.y - goal.y) <= xy_tol:
        return rotate_to_heading(pose, twist, goal, spec, dt_ctrl, cfg.heading_gain)
    v, w = sample_grid(dynamic_window(twist, spec, dt_ctrl), cfg)
    poses = rollout_poses(pose, v, w, cfg)
    ctx = ScoreContext(path, goal, obstacles, spec, cfg)
    dist = obstacles.distance(poses[..., :2], upper=clearance_upper(cfg, spec))
    ok = admissible_batch(pose, poses, v, w, obstacles, spec, cfg.horizon, dist,
                          cfg.footprint_padding)
    if not ok.any():
        raise Stuck("no admissible velocity in the dynamic window")
    scores = np.where(ok, score_rollouts(poses, v, ctx, dist), -np.inf)
    best = int(np.argmax(scores))  # first maximum: lowest v, then lowest omega
    return Twist(float(v[best]), float(w[best]))


class DwaPlanner:
    """Stateful wrapper around :func:`choose`.

    Adds the trailing-progress watchdog, and turns a halted robot toward the
    path before sampling (the four critics cannot rank in-place rotations,
    which all share one rollout endpoint).
    """

    name = "dwa"

    def __init__(self, spec: RobotSpec, cfg: DwaConfig = DwaConfig(), dt_ctrl: float = DT_CTRL,
                 xy_tol: float = GOAL_XY_TOLERANCE, yaw_tol: float = GOAL_YAW_TOLERANCE):
        self.spec = spec
        self.cfg = cfg
        self.dt_ctrl = dt_ctrl
        self.xy_tol = xy_tol
        self.yaw_tol = yaw_tol
        self.monitor = ProgressMonitor(cfg.stuck_window, cfg.stuck_progress)
        self.lookup: Optional[PathLookup] = None

    def set_path(self, path: GlobalPath, goal: Optional[Pose2D] = None) -> None:
        self.lookup = PathLookup(path, goal=goal)
        self.monitor.reset()

    def step(self, t: float, pose: Pose2D, twist: Twist, obstacles: ObstacleField) -> Twist:
        goal = self.lookup.goal
        near_goal = math.hypot(pose.x - goal.x, pose.y - goal.y) <= self.xy_tol
        if not near_goal:
            remaining = float(self.lookup.remaining(pose.xy[None])[0])
            if self.monitor.update(t, remaining):
                self.monitor.reset()
                raise Stuck("no progress toward the goal")
            if abs(twist.v) < ALIGN_SPEED:
                bearing = self.lookup.bearing(pose, ALIGN_LOOKAHEAD)
                if abs(normalize_angle(bearing - pose.theta)) > ALIGN_ANGLE:
                    return rotate_to_heading(pose, twist, Pose2D(pose.x, pose.y, bearing),
                                             self.spec, self.dt_ctrl, self.cfg.heading_gain)
        return choose(pose, twist, self.lookup, obstacles, self.cfg, self.spec, self.dt_ctrl,
                      self.xy_tol, self.yaw_tol)
