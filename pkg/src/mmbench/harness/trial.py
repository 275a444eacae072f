"""One seeded trial: sense, (re-)plan, local-plan, simulate, log."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..core_types import Pose2D, RobotSpec, Twist
from ..global_planner import GlobalPath, NoPath, plan
from ..local_common import ObstacleField, Stuck, at_goal
from ..metrics import TrajectoryLog
from ..planner_dwa import DwaConfig, DwaPlanner
from ..planner_teb import TebConfig, TebPlanner
from ..world_sim import DT_CTRL, DT_SIM, ArmModel, CollisionDetected, RangeSensor, Simulator
from .scenarios import ConfigError, Scenario, ScenarioInvalid

log = logging.getLogger(__name__)

PLANNERS = ("dwa", "teb")
MAX_REPLANS = 3
REPLAN_RESET_DISTANCE = 1.0
ESCAPE_RADIUS = 0.6
# the goal only counts once the base has come to rest inside the tolerance
STOPPED_V = 0.05
STOPPED_OMEGA = 0.05


@dataclass(frozen=True)
class TrialSpec:
    scenario: str
    planner: str
    seed: int = 0
    repetitions: int = 1
    overrides: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.planner not in PLANNERS + ("external-log",):
            raise ConfigError(f"unknown planner {self.planner!r}")


def _build(cls, overrides: Optional[dict], what: str):
    overrides = dict(overrides or {})
    names = {f.name for f in fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    if "mount_offset" in overrides:
        overrides["mount_offset"] = tuple(overrides["mount_offset"])
    try:
        return cls(**overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {what} config: {e}") from e


def robot_spec(overrides: Optional[dict] = None) -> RobotSpec:
    return _build(RobotSpec, overrides, "robot")


def make_planner(name: str, spec: RobotSpec, overrides: dict, tol):
    if name == "dwa":
        return DwaPlanner(spec, _build(DwaConfig, overrides.get("dwa"), "dwa"), DT_CTRL, *tol)
    if name == "teb":
        return TebPlanner(spec, _build(TebConfig, overrides.get("teb"), "teb"), DT_CTRL, *tol)
    raise ConfigError(f"planner {name!r} cannot be simulated")


class _Recorder:
    def __init__(self):
        self.rows = []

    def add(self, sim: Simulator, cmd: Twist):
        s = sim.state
        p = s.base_pose
        self.rows.append((s.time, p.x, p.y, p.theta, cmd.v, cmd.omega,
                          *sim.expected_ee(), *s.ee_actual))

    def arrays(self):
        a = np.array(self.rows, dtype=float).reshape(-1, 12)
        return a[:, 0], a[:, 1:4], a[:, 4:6], a[:, 6:9], a[:, 9:12]


def run_trial(spec: TrialSpec, scenario: Scenario) -> TrajectoryLog:
    """Run one trial to goal, collision, timeout or persistent Stuck."""
    ov = spec.overrides or {}
    robot = robot_spec(ov.get("robot"))
    scenario.validate(robot)
    arm_ov = dict(ov.get("arm") or {})
    arm = _build(ArmModel, {**arm_ov, "schedule": scenario.mount_schedule(robot)}, "arm")
    sensor = _build(RangeSensor, ov.get("sensor"), "sensor")
    tol = scenario.goal_tolerance
    planner = make_planner(spec.planner, robot, ov, tol)

    base_map = scenario.map_for_planner()
    try:
        path = plan(base_map, scenario.start, scenario.goal, robot)
    except NoPath as e:
        raise ScenarioInvalid(f"{scenario.id}: {e}") from e
    initial_path = path
    planner.set_path(path, scenario.goal)

    sim = Simulator(scenario.start, scenario.obstacles, robot, arm, sensor, seed=spec.seed)
    steps = int(round(DT_CTRL / DT_SIM))
    rec = _Recorder()
    sensed = base_map
    replans = 0
    stuck_streak = 0
    moved_since_stuck = 0.0
    reason = "timeout"
    success = False
    braking = False
    last = sim.state.base_pose

    while True:
        st = sim.state
        pose = st.base_pose
        moved_since_stuck += math.hypot(pose.x - last.x, pose.y - last.y)
        last = pose
        if moved_since_stuck >= REPLAN_RESET_DISTANCE:
            stuck_streak = 0
        at_rest = abs(st.base_twist.v) <= STOPPED_V and abs(st.base_twist.omega) <= STOPPED_OMEGA
        if at_rest and at_goal(pose, scenario.goal, *tol):
            rec.add(sim, Twist())
            success, reason = True, "goal"
            break
        if st.time >= scenario.timeout - 1e-9:
            rec.add(sim, Twist())
            break
        pts = sim.sense().points(pose)
        if braking and at_rest:
            # halted after a Stuck: re-plan on the map plus everything sensed
            braking = False
            sensed = sensed.with_points(pts)
            replans += 1
            try:
                path = plan(sensed, pose, scenario.goal, robot, escape_radius=ESCAPE_RADIUS)
            except NoPath:
                log.debug("t=%.1f re-plan found no path, keeping the old one", st.time)
            planner.set_path(path, scenario.goal)
        if braking:
            cmd = Twist()
        else:
            try:
                cmd = planner.step(st.time, pose, st.base_twist, ObstacleField(pts))
            except Stuck as e:
                stuck_streak += 1
                moved_since_stuck = 0.0
                log.debug("t=%.1f stuck (%s), streak %d", st.time, e, stuck_streak)
                if stuck_streak > MAX_REPLANS:
                    rec.add(sim, Twist())
                    reason = "stuck"
                    break
                sensed = sensed.with_points(pts)
                braking = True
                cmd = Twist()
        rec.add(sim, cmd)
        try:
            sim.advance(cmd, steps)
        except CollisionDetected:
            rec.add(sim, Twist())
            reason = "collision"
            break

    t, base, cmd, ee_exp, ee_act = rec.arrays()
    meta = {"scenario": scenario.id, "planner": spec.planner, "seed": spec.seed,
            "reason": reason, "replans": replans}
    return TrajectoryLog(t, base, cmd, ee_exp, ee_act, global_path=initial_path,
                         goal=scenario.goal, success=success, meta=meta)


def run_trial_safe(spec: TrialSpec, scenario: Scenario) -> TrajectoryLog:
    """:func:`run_trial` that turns unexpected errors into failed logs."""
    try:
        return run_trial(spec, scenario)
    except ConfigError:
        raise
    except Exception as e:  # noqa: BLE001 - a campaign never aborts on one trial
        log.exception("trial %s/%s seed %d crashed", spec.scenario, spec.planner, spec.seed)
        z = np.zeros((1, 3))
        return TrajectoryLog([0.0], z, np.zeros((1, 2)), z, z, goal=scenario.goal, success=False,
                             meta={"scenario": scenario.id, "planner": spec.planner,
                                   "seed": spec.seed, "reason": f"error: {e}", "replans": 0})
