"""Scenario files: world extents, obstacles, start/goal, arm schedule, timeout.

Schema (JSON)::

    {
      "id": "playground_static",
      "description": "...",
      "world": {"width": 24.0, "height": 16.0, "resolution": 0.1},
      "obstacles": [
        {"circle": [cx, cy, r]},
        {"rect": [xmin, ymin, xmax, ymax], "mapped": false},
        {"circle": [cx, cy, r], "velocity": [vx, vy]}
      ],
      "start": [x, y, theta],
      "goal": [x, y, theta],
      "goal_tolerance": [0.15, 0.2],
      "arm": "static" | {"amplitude": [ax, ay, az], "period": 4.0,
                         "t_begin": 5.0, "t_end": 25.0},
      "timeout": 180.0
    }

``mapped`` defaults to true and ``velocity`` to none. World boundary walls
are added automatically unless ``"walls": false``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..core_types import Pose2D, RobotSpec
from ..world_sim import Circle, MountSchedule, Obstacle, OccupancyGrid, Rect, footprint_clearance

WALL = 0.2


class ConfigError(ValueError):
    """Malformed scenario or campaign configuration."""


class ScenarioInvalid(ConfigError):
    """Scenario is well-formed but unusable (e.g. start in collision)."""


@dataclass(frozen=True)
class Scenario:
    id: str
    width: float
    height: float
    obstacles: tuple[Obstacle, ...]
    start: Pose2D
    goal: Pose2D
    resolution: float = 0.1
    goal_tolerance: tuple[float, float] = (0.15, 0.2)
    arm_motion: Optional[dict] = None
    timeout: float = 180.0
    description: str = ""
    source: dict = field(default_factory=dict, compare=False, hash=False)

    def map_for_planner(self) -> OccupancyGrid:
        return OccupancyGrid.from_obstacles(self.obstacles, self.width, self.height,
                                            self.resolution, mapped_only=True)

    def true_map(self) -> OccupancyGrid:
        return OccupancyGrid.from_obstacles(self.obstacles, self.width, self.height,
                                            self.resolution, mapped_only=False)

    @property
    def unmapped(self) -> tuple[Obstacle, ...]:
        return tuple(o for o in self.obstacles if not o.mapped)

    def mount_schedule(self, spec: RobotSpec) -> MountSchedule:
        if not self.arm_motion:
            return MountSchedule(offset=tuple(spec.mount_offset))
        m = self.arm_motion
        return MountSchedule(offset=tuple(spec.mount_offset),
                             amplitude=tuple(m.get("amplitude", (0.0, 0.0, 0.0))),
                             period=float(m.get("period", 4.0)),
                             t_begin=float(m.get("t_begin", 0.0)),
                             t_end=float(m.get("t_end", 0.0)))

    def validate(self, spec: RobotSpec) -> None:
        if self.timeout <= 0:
            raise ScenarioInvalid(f"{self.id}: timeout must be positive")
        for name, p in (("start", self.start), ("goal", self.goal)):
            if not (0 <= p.x <= self.width and 0 <= p.y <= self.height):
                raise ScenarioInvalid(f"{self.id}: {name} outside the world")
            static = [o for o in self.obstacles if o.velocity is None]
            if footprint_clearance(p, static, spec.footprint_radius) <= 0:
                raise ScenarioInvalid(f"{self.id}: {name} in collision")


def _pose(v, what: str) -> Pose2D:
    try:
        x, y, *rest = v
        return Pose2D(float(x), float(y), float(rest[0]) if rest else 0.0)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {what}: {v!r}") from e


def _obstacle(d: dict) -> Obstacle:
    try:
        if "circle" in d:
            cx, cy, r = (float(v) for v in d["circle"])
            shape = Circle(cx, cy, r)
        elif "rect" in d:
            shape = Rect(*(float(v) for v in d["rect"]))
        else:
            raise ConfigError(f"obstacle needs 'circle' or 'rect': {d!r}")
        vel = d.get("velocity")
        vel = (float(vel[0]), float(vel[1])) if vel is not None else None
        return Obstacle(shape, bool(d.get("mapped", True)), vel)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad obstacle {d!r}: {e}") from e


def boundary_walls(width: float, height: float) -> list[Obstacle]:
    return [
        Obstacle(Rect(0.0, 0.0, width, WALL)),
        Obstacle(Rect(0.0, height - WALL, width, height)),
        Obstacle(Rect(0.0, 0.0, WALL, height)),
        Obstacle(Rect(width - WALL, 0.0, width, height)),
    ]


def scenario_from_dict(d: dict) -> Scenario:
    try:
        world = d["world"]
        width, height = float(world["width"]), float(world["height"])
        obstacles = [_obstacle(o) for o in d.get("obstacles", [])]
        if d.get("walls", True):
            obstacles = boundary_walls(width, height) + obstacles
        arm = d.get("arm", "static")
        if arm == "static":
            arm = None
        elif not isinstance(arm, dict):
            raise ConfigError(f"bad arm entry {arm!r}")
        tol = d.get("goal_tolerance", (0.15, 0.2))
        return Scenario(
            id=str(d["id"]),
            width=width,
            height=height,
            obstacles=tuple(obstacles),
            start=_pose(d["start"], "start"),
            goal=_pose(d["goal"], "goal"),
            resolution=float(world.get("resolution", 0.1)),
            goal_tolerance=(float(tol[0]), float(tol[1])),
            arm_motion=arm,
            timeout=float(d.get("timeout", 180.0)),
            description=str(d.get("description", "")),
            source=d,
        )
    except KeyError as e:
        raise ConfigError(f"scenario missing key {e}") from e


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            return scenario_from_dict(json.load(fh))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e


def builtin_ids() -> list[str]:
    root = resources.files("mmbench") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def builtin(scenario_id: str) -> Scenario:
    root = resources.files("mmbench") / "scenarios"
    f = root / f"{scenario_id}.json"
    if not f.is_file():
        raise ConfigError(f"unknown scenario {scenario_id!r}; known: {', '.join(builtin_ids())}")
    return scenario_from_dict(json.loads(f.read_text(encoding="utf-8")))


def resolve(ref) -> Scenario:
    """Built-in id, path to a scenario file, or inline dict."""
    if isinstance(ref, Scenario):
        return ref
    if isinstance(ref, dict):
        return scenario_from_dict(ref)
    if isinstance(ref, (str, Path)) and str(ref).endswith(".json"):
        return load_scenario(ref)
    return builtin(str(ref))
