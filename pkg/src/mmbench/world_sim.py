"""Fixed-timestep world simulation.

The base follows exact constant-twist arcs, obstacles are circles or
axis-aligned boxes (optionally moving at constant velocity), a 2D range
sensor ray-casts against the true obstacle set, and the carried load is a
point mass tied to the nominal end-effector position by a spring-damper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core_types import Point3, Pose2D, RobotSpec, Twist

DT_SIM = 0.01
DT_CTRL = 0.1
STRAIGHT_EPS = 1e-9


class CollisionDetected(RuntimeError):
    """The base footprint touched an obstacle; terminal for a trial."""


# --------------------------------------------------------------------------
# Obstacles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    def shifted(self, dx: float, dy: float) -> Circle:
        return Circle(self.cx + dx, self.cy + dy, self.radius)

    def distance(self, px, py):
        """Signed distance from point(s) to the boundary (negative inside)."""
        return np.hypot(np.asarray(px) - self.cx, np.asarray(py) - self.cy) - self.radius

    def point_distance(self, px: float, py: float) -> float:
        return math.hypot(px - self.cx, py - self.cy) - self.radius


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("degenerate rectangle")

    def shifted(self, dx: float, dy: float) -> Rect:
        return Rect(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)

    def distance(self, px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        hx = 0.5 * (self.xmax - self.xmin)
        hy = 0.5 * (self.ymax - self.ymin)
        qx = np.abs(px - 0.5 * (self.xmin + self.xmax)) - hx
        qy = np.abs(py - 0.5 * (self.ymin + self.ymax)) - hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside

    def point_distance(self, px: float, py: float) -> float:
        qx = abs(px - 0.5 * (self.xmin + self.xmax)) - 0.5 * (self.xmax - self.xmin)
        qy = abs(py - 0.5 * (self.ymin + self.ymax)) - 0.5 * (self.ymax - self.ymin)
        return math.hypot(max(qx, 0.0), max(qy, 0.0)) + min(max(qx, qy), 0.0)


Shape = Union[Circle, Rect]


@dataclass(frozen=True)
class Obstacle:
    shape: Shape
    mapped: bool = True
    velocity: Optional[tuple[float, float]] = None

    def advanced(self, dt: float) -> Obstacle:
        if self.velocity is None:
            return self
        vx, vy = self.velocity
        return replace(self, shape=self.shape.shifted(vx * dt, vy * dt))


def obstacle_distance(obstacles: Sequence[Obstacle], px, py):
    """Minimum signed distance from point(s) to any obstacle (inf if none)."""
    d = np.full(np.shape(px), np.inf)
    for ob in obstacles:
        d = np.minimum(d, ob.shape.distance(px, py))
    return d


def footprint_clearance(pose: Pose2D, obstacles: Sequence[Obstacle], radius: float) -> float:
    d = min((ob.shape.point_distance(pose.x, pose.y) for ob in obstacles), default=math.inf)
    return d - radius


# --------------------------------------------------------------------------
# Occupancy grid
# --------------------------------------------------------------------------


@dataclass
class OccupancyGrid:
    """Boolean grid; ``cells[iy, ix]`` covers the square whose lower-left
    corner is ``origin + (ix, iy) * resolution``."""

    resolution: float
    width: int
    height: int
    origin: Pose2D = field(default_factory=Pose2D)
    cells: np.ndarray = None

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width), dtype=bool)
        self.cells = np.asarray(self.cells, dtype=bool).reshape(self.height, self.width)

    def copy(self) -> OccupancyGrid:
        return OccupancyGrid(self.resolution, self.width, self.height, self.origin, self.cells.copy())

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def center(self, ix, iy):
        return (
            self.origin.x + (np.asarray(ix) + 0.5) * self.resolution,
            self.origin.y + (np.asarray(iy) + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def occupied(self, ix: int, iy: int) -> bool:
        """Out-of-bounds cells count as occupied."""
        return not self.in_bounds(ix, iy) or bool(self.cells[iy, ix])

    def with_points(self, points: np.ndarray) -> OccupancyGrid:
        """Copy of the grid with the cells containing ``points`` marked."""
        out = self.copy()
        if len(points):
            ix = np.floor((points[:, 0] - self.origin.x) / self.resolution).astype(int)
            iy = np.floor((points[:, 1] - self.origin.y) / self.resolution).astype(int)
            ok = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
            out.cells[iy[ok], ix[ok]] = True
        return out

    @classmethod
    def from_obstacles(cls, obstacles: Sequence[Obstacle], width_m: float, height_m: float,
                       resolution: float, mapped_only: bool = True) -> OccupancyGrid:
        """Rasterise every (mapped) obstacle overlapping a cell."""
        w = int(round(width_m / resolution))
        h = int(round(height_m / resolution))
        grid = cls(resolution, w, h)
        xs = (np.arange(w) + 0.5) * resolution
        ys = (np.arange(h) + 0.5) * resolution
        cx, cy = np.meshgrid(xs, ys)
        half = 0.5 * resolution
        for ob in obstacles:
            if mapped_only and not ob.mapped:
                continue
            s = ob.shape
            if isinstance(s, Circle):
                # distance from circle centre to the cell square
                dx = np.maximum(np.abs(cx - s.cx) - half, 0.0)
                dy = np.maximum(np.abs(cy - s.cy) - half, 0.0)
                hit = np.hypot(dx, dy) < s.radius
            else:
                hit = ((cx + half > s.xmin) & (cx - half < s.xmax)
                       & (cy + half > s.ymin) & (cy - half < s.ymax))
            grid.cells |= hit
        return grid


# --------------------------------------------------------------------------
# Kinematics
# --------------------------------------------------------------------------


def integrate_arc(x, y, theta, v, omega, dt):
    """Exact constant-twist motion; works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    th1 = theta + omega * dt
    straight = np.abs(omega) < STRAIGHT_EPS
    safe_w = np.where(straight, 1.0, omega)
    ax = np.where(straight, v * dt * np.cos(theta), v / safe_w * (np.sin(th1) - np.sin(theta)))
    ay = np.where(straight, v * dt * np.sin(theta), -v / safe_w * (np.cos(th1) - np.cos(theta)))
    return x + ax, y + ay, th1


def _arc(x: float, y: float, th: float, v: float, w: float, dt: float):
    """Scalar twin of :func:`integrate_arc`."""
    th1 = th + w * dt
    if abs(w) < STRAIGHT_EPS:
        return x + v * dt * math.cos(th), y + v * dt * math.sin(th), th1
    r = v / w
    return x + r * (math.sin(th1) - math.sin(th)), y - r * (math.cos(th1) - math.cos(th)), th1


@dataclass(frozen=True)
class WorldState:
    time: float = 0.0
    base_pose: Pose2D = field(default_factory=Pose2D)
    base_twist: Twist = field(default_factory=Twist)
    obstacles: tuple[Obstacle, ...] = ()
    ee_actual: Point3 = Point3(0.0, 0.0, 0.0)
    ee_velocity: Point3 = Point3(0.0, 0.0, 0.0)
    collision: bool = False


def accel_limited(current: Twist, cmd: Twist, spec: RobotSpec, dt: float) -> Twist:
    dv_max = spec.a_lin_max * dt
    dw_max = spec.a_ang_max * dt
    v = current.v + min(max(cmd.v - current.v, -dv_max), dv_max)
    w = current.omega + min(max(cmd.omega - current.omega, -dw_max), dw_max)
    return spec.clamp(Twist(v, w))


def step_base(state: WorldState, cmd: Twist, spec: RobotSpec, dt: float = DT_SIM) -> WorldState:
    """Advance base and obstacles by one tick; flags (does not raise) collisions."""
    tw = accel_limited(state.base_twist, cmd, spec, dt)
    p = state.base_pose
    pose = Pose2D(*_arc(p.x, p.y, p.theta, tw.v, tw.omega, dt))
    obstacles = tuple(ob.advanced(dt) for ob in state.obstacles)
    collided = footprint_clearance(pose, obstacles, spec.footprint_radius) <= 0.0
    return replace(state, time=state.time + dt, base_pose=pose, base_twist=tw,
                   obstacles=obstacles, collision=collided)


# --------------------------------------------------------------------------
# Arm / load
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MountSchedule:
    """Base-frame end-effector offset as a function of time.

    Between ``t_begin`` and ``t_end`` the offset moves by
    ``amplitude * (1 - cos(2 pi (t - t_begin) / period)) / 2``; outside that
    window it rests at ``offset``.
    """

    offset: tuple[float, float, float] = (0.2, 0.0, 1.1)
    amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    period: float = 4.0
    t_begin: float = 0.0
    t_end: float = 0.0

    @property
    def moving(self) -> bool:
        return any(self.amplitude) and self.t_end > self.t_begin

    def _phase(self, t: float) -> Optional[float]:
        if not self.moving or t < self.t_begin or t > self.t_end:
            return None
        return 2.0 * math.pi * (t - self.t_begin) / self.period

    def offset_at(self, t: float) -> tuple[float, float, float]:
        ph = self._phase(t)
        if ph is None:
            return self.offset
        s = 0.5 * (1.0 - math.cos(ph))
        return tuple(o + a * s for o, a in zip(self.offset, self.amplitude))

    def velocity_at(self, t: float) -> tuple[float, float, float]:
        ph = self._phase(t)
        if ph is None:
            return (0.0, 0.0, 0.0)
        ds = 0.5 * math.sin(ph) * 2.0 * math.pi / self.period
        return tuple(a * ds for a in self.amplitude)


@dataclass(frozen=True)
class ArmModel:
    schedule: MountSchedule = field(default_factory=MountSchedule)
    stiffness: float = 400.0
    damping: float = 18.0
    mass: float = 5.0

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0 or self.mass <= 0:
            raise ValueError("stiffness, damping and mass must be positive")

    @property
    def natural_frequency(self) -> float:
        return math.sqrt(self.stiffness / self.mass)

    @property
    def damping_ratio(self) -> float:
        return self.damping / (2.0 * math.sqrt(self.stiffness * self.mass))

    @property
    def underdamped(self) -> bool:
        return self.damping_ratio < 1.0


def expected_ee(base_pose: Pose2D, arm: ArmModel, t: float) -> Point3:
    ox, oy, oz = arm.schedule.offset_at(t)
    x, y = base_pose.transform_point(ox, oy)
    return Point3(x, y, oz)


def expected_ee_velocity(base_pose: Pose2D, twist: Twist, arm: ArmModel, t: float) -> Point3:
    ox, oy, oz = arm.schedule.offset_at(t)
    dox, doy, doz = arm.schedule.velocity_at(t)
    c, s = math.cos(base_pose.theta), math.sin(base_pose.theta)
    # d/dt [p + R o] = v*heading + omega * R' o + R o'
    vx = twist.v * c + twist.omega * (-s * ox - c * oy) + (c * dox - s * doy)
    vy = twist.v * s + twist.omega * (c * ox - s * oy) + (s * dox + c * doy)
    return Point3(vx, vy, doz)


def step_arm(state: WorldState, arm: ArmModel, dt: float = DT_SIM) -> tuple[Point3, Point3]:
    """Semi-implicit Euler step of the load; ``state`` is the post-base-step state."""
    target = expected_ee(state.base_pose, arm, state.time)
    target_v = expected_ee_velocity(state.base_pose, state.base_twist, arm, state.time)
    k, c, m = arm.stiffness, arm.damping, arm.mass
    vel = []
    pos = []
    for p, v, tp, tv in zip(state.ee_actual, state.ee_velocity, target, target_v):
        a = (k * (tp - p) + c * (tv - v)) / m
        v = v + a * dt
        vel.append(v)
        pos.append(p + v * dt)
    return Point3(*pos), Point3(*vel)


def arm_energy(state: WorldState, arm: ArmModel) -> float:
    """Spring plus kinetic energy of the load relative to its anchor."""
    target = expected_ee(state.base_pose, arm, state.time)
    target_v = expected_ee_velocity(state.base_pose, state.base_twist, arm, state.time)
    e = sum((a - b) ** 2 for a, b in zip(state.ee_actual, target))
    dv = sum((a - b) ** 2 for a, b in zip(state.ee_velocity, target_v))
    return 0.5 * arm.stiffness * e + 0.5 * arm.mass * dv


# --------------------------------------------------------------------------
# Range sensor
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RangeSensor:
    n_rays: int = 360
    max_range: float = 10.0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.n_rays < 1:
            raise ValueError("ray count must be >= 1")

    @property
    def angles(self) -> np.ndarray:
        return -np.pi + (np.arange(self.n_rays) + 0.5) * (2.0 * np.pi / self.n_rays) \
            if self.n_rays > 1 else np.zeros(1)


@dataclass(frozen=True)
class RangeScan:
    angles: np.ndarray
    ranges: np.ndarray
    max_range: float

    @property
    def ray_count(self) -> int:
        return len(self.angles)

    def points(self, pose: Pose2D) -> np.ndarray:
        """World-frame hit points (rays that returned max_range are dropped)."""
        hit = self.ranges < self.max_range
        a = self.angles[hit] + pose.theta
        r = self.ranges[hit]
        return np.column_stack([pose.x + r * np.cos(a), pose.y + r * np.sin(a)])


def raycast(ox: float, oy: float, angles: np.ndarray, obstacles: Sequence[Obstacle],
            max_range: float) -> np.ndarray:
    dx = np.cos(angles)
    dy = np.sin(angles)
    best = np.full(angles.shape, np.inf)
    for ob in obstacles:
        s = ob.shape
        if isinstance(s, Circle):
            fx, fy = ox - s.cx, oy - s.cy
            b = fx * dx + fy * dy
            c = fx * fx + fy * fy - s.radius * s.radius
            disc = b * b - c
            ok = disc >= 0.0
            sq = np.sqrt(np.where(ok, disc, 0.0))
            t0 = -b - sq
            t1 = -b + sq
            t = np.where(t0 >= 0.0, t0, np.where(t1 >= 0.0, 0.0, np.inf))
            best = np.minimum(best, np.where(ok, t, np.inf))
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_x = 1.0 / dx
                inv_y = 1.0 / dy
                tx1 = (s.xmin - ox) * inv_x
                tx2 = (s.xmax - ox) * inv_x
                ty1 = (s.ymin - oy) * inv_y
                ty2 = (s.ymax - oy) * inv_y
            # parallel rays: inside the slab means unbounded, outside means miss
            in_x = (ox >= s.xmin) & (ox <= s.xmax)
            in_y = (oy >= s.ymin) & (oy <= s.ymax)
            par_x = dx == 0.0
            par_y = dy == 0.0
            txmin = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(tx1, tx2))
            txmax = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(tx1, tx2))
            tymin = np.where(par_y, np.where(in_y, -np.inf, np.inf), np.minimum(ty1, ty2))
            tymax = np.where(par_y, np.where(in_y, np.inf, -np.inf), np.maximum(ty1, ty2))
            tn = np.maximum(txmin, tymin)
            tf = np.minimum(txmax, tymax)
            hit = (tn <= tf) & (tf >= 0.0)
            best = np.minimum(best, np.where(hit, np.maximum(tn, 0.0), np.inf))
    return np.minimum(best, max_range)


def scan(state: WorldState, sensor: RangeSensor = RangeSensor(),
         rng: Optional[np.random.Generator] = None) -> RangeScan:
    """Simulate one sweep from the base centre against the true obstacles."""
    p = state.base_pose
    angles = sensor.angles
    r = raycast(p.x, p.y, angles + p.theta, state.obstacles, sensor.max_range)
    if sensor.noise_std > 0.0 and rng is not None:
        hit = r < sensor.max_range
        r = np.where(hit, r + rng.normal(0.0, sensor.noise_std, r.shape), r)
    r = np.clip(r, 1e-6, sensor.max_range)
    return RangeScan(angles, r, sensor.max_range)


# --------------------------------------------------------------------------
# Simulator
# --------------------------------------------------------------------------


class Simulator:
    """Owns one trial's world state and advances it in ``DT_SIM`` ticks."""

    def __init__(self, start: Pose2D, obstacles: Sequence[Obstacle], spec: RobotSpec,
                 arm: ArmModel = ArmModel(), sensor: RangeSensor = RangeSensor(),
                 seed: int = 0, dt_sim: float = DT_SIM):
        self.spec = spec
        self.arm = arm
        self.sensor = sensor
        self.dt_sim = dt_sim
        self.rng = np.random.default_rng(seed)
        ee = expected_ee(start, arm, 0.0)
        self.state = WorldState(time=0.0, base_pose=start, obstacles=tuple(obstacles),
                                ee_actual=ee, ee_velocity=Point3(0.0, 0.0, 0.0))
        self._ticks = 0

    def sense(self) -> RangeScan:
        return scan(self.state, self.sensor, self.rng)

    def expected_ee(self) -> Point3:
        return expected_ee(self.state.base_pose, self.arm, self.state.time)

    def advance(self, cmd: Twist, n_steps: int) -> WorldState:
        for _ in range(n_steps):
            s = step_base(self.state, cmd, self.spec, self.dt_sim)
            self._ticks += 1
            # integer tick count keeps time free of accumulated rounding
            s = replace(s, time=self._ticks * self.dt_sim)
            ee, ev = step_arm(s, self.arm, self.dt_sim)
            self.state = replace(s, ee_actual=ee, ee_velocity=ev)
            if s.collision:
                raise CollisionDetected(f"collision at t={s.time:.2f}s")
        return self.state
