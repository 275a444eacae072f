"""Trajectory-quality metrics computed from a trial log.

Six quantities are reported per trial: path smoothness (sum of turn angles),
end-effector stability (time integral of the absolute expected-vs-actual
end-effector error, per axis), distance travelled, the area between the
travelled and global paths, squared final position error and total time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .core_types import EPS_LEN, Point3, Pose2D, angle_between
from .global_planner import GlobalPath


class InsufficientSamples(ValueError):
    pass


class EmptyGlobalPath(ValueError):
    pass


@dataclass
class TrajectoryLog:
    """Per-control-tick samples of one trial.

    ``base`` is (N, 3) x, y, heading; ``cmd`` is (N, 2) v, omega;
    ``ee_expected`` and ``ee_actual`` are (N, 3).
    """

    t: np.ndarray
    base: np.ndarray
    cmd: np.ndarray
    ee_expected: np.ndarray
    ee_actual: np.ndarray
    global_path: Optional[GlobalPath] = None
    goal: Optional[Pose2D] = None
    success: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = len(self.t)
        self.base = np.asarray(self.base, dtype=float).reshape(n, 3)
        self.cmd = np.asarray(self.cmd, dtype=float).reshape(n, 2)
        self.ee_expected = np.asarray(self.ee_expected, dtype=float).reshape(n, 3)
        self.ee_actual = np.asarray(self.ee_actual, dtype=float).reshape(n, 3)

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def t_start(self) -> float:
        return float(self.t[0]) if self.n else 0.0

    @property
    def t_final(self) -> float:
        return float(self.t[-1]) if self.n else 0.0

    @property
    def positions(self) -> np.ndarray:
        return self.base[:, :2]

    def validate(self) -> None:
        if self.n and np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")


def _require(log: TrajectoryLog, n: int) -> None:
    if log.n < n:
        raise InsufficientSamples(f"need at least {n} samples, got {log.n}")


def _segments(xy: np.ndarray) -> np.ndarray:
    """Consecutive displacement vectors with degenerate ones removed."""
    d = np.diff(xy, axis=0)
    return d[np.hypot(d[:, 0], d[:, 1]) > EPS_LEN]


def turn_angles(xy: np.ndarray) -> np.ndarray:
    """Turn angle at every sample (0 at the ends and where the robot idles).

    The angle at sample ``i`` is between the last non-degenerate segment
    arriving at ``i`` and the segment leaving it.
    """
    xy = np.asarray(xy, dtype=float)
    out = np.zeros(len(xy))
    prev = None
    for i in range(1, len(xy)):
        seg = xy[i] - xy[i - 1]
        if math.hypot(*seg) <= EPS_LEN:
            continue
        if prev is not None:
            out[prev[0]] = angle_between(prev[1], seg)
        prev = (i, seg)
    return out


def path_smoothness(log: TrajectoryLog) -> float:
    """Sum of angles between consecutive non-degenerate travel segments."""
    _require(log, 3)
    segs = _segments(log.positions)
    return float(sum(angle_between(a, b) for a, b in zip(segs[:-1], segs[1:])))


def ee_stability(log: TrajectoryLog) -> Point3:
    _require(log, 2)
    err = np.abs(log.ee_expected - log.ee_actual)
    return Point3(*(float(v) for v in np.trapezoid(err, log.t, axis=0)))


def distance_travelled(log: TrajectoryLog) -> float:
    """Sum over every consecutive pair of base positions, final segment included."""
    _require(log, 2)
    d = np.diff(log.positions, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def resample(xy: np.ndarray, m: int) -> np.ndarray:
    """``m`` points equally spaced in arc length along a polyline (ends included)."""
    xy = np.asarray(xy, dtype=float)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if m == 1:
        return xy[:1].copy()
    if cum[-1] <= 0.0:
        return np.repeat(xy[:1], m, axis=0)
    keep = np.concatenate([[True], seg > 0.0])
    cum, pts = cum[keep], xy[keep]
    s = np.linspace(0.0, cum[-1], m)
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def squared_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squared distances between two curves after arc-length alignment."""
    m = min(len(a), len(b))
    ra, rb = resample(a, m), resample(b, m)
    return float(np.sum((ra - rb) ** 2))


def path_divergence(log: TrajectoryLog) -> float:
    """Area-like measure between travelled and global paths.

    Both curves are resampled to ``m = min(N, n)`` points; the summed squared
    gap is multiplied by the distance travelled and divided by ``m``.
    """
    _require(log, 2)
    if log.global_path is None or log.global_path.n == 0:
        raise EmptyGlobalPath("global path is empty")
    X = log.global_path.xy
    m = min(log.n, len(X))
    d_between = squared_gap(log.positions, X)
    return d_between * distance_travelled(log) / m


def final_accuracy(log: TrajectoryLog) -> float:
    """Squared distance between final base position and goal (heading ignored)."""
    _require(log, 1)
    x, y = log.positions[-1]
    return float((x - log.goal.x) ** 2 + (y - log.goal.y) ** 2)


def total_time(log: TrajectoryLog) -> float:
    return max(log.t_final - log.t_start, 0.0)


@dataclass
class MetricsReport:
    """One table row. Failed trials only carry ``T_taken`` and ``success``."""

    p_s: Optional[float] = None
    p_e_x: Optional[float] = None
    p_e_y: Optional[float] = None
    p_e_z: Optional[float] = None
    d_travelled: Optional[float] = None
    A_between: Optional[float] = None
    p_acc: Optional[float] = None
    T_taken: Optional[float] = None
    success: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def p_e(self) -> Optional[Point3]:
        if self.p_e_x is None:
            return None
        return Point3(self.p_e_x, self.p_e_y, self.p_e_z)

    def values(self) -> dict[str, Optional[float]]:
        return {k: getattr(self, k) for k in METRIC_FIELDS}


METRIC_FIELDS = ("p_s", "p_e_x", "p_e_y", "p_e_z", "d_travelled", "A_between", "p_acc", "T_taken")

REPORT_META = {
    "d_travelled": "sum over all consecutive base-position pairs",
    "A_between": "both curves resampled by arc length to min(N, n) points",
    "p_acc": "squared distance; plain distance in p_acc_distance",
}


def report(log: TrajectoryLog) -> MetricsReport:
    """All metrics for one trial.

    Metrics whose inputs the log lacks (no goal, no global path) are left
    as ``None``.
    """
    if not log.success:
        return MetricsReport(T_taken=total_time(log), success=False)
    pe = ee_stability(log)
    rep = MetricsReport(
        p_s=path_smoothness(log),
        p_e_x=pe.x, p_e_y=pe.y, p_e_z=pe.z,
        d_travelled=distance_travelled(log),
        A_between=path_divergence(log) if log.global_path is not None else None,
        p_acc=final_accuracy(log) if log.goal is not None else None,
        T_taken=total_time(log),
        success=True,
        meta=dict(REPORT_META),
    )
    if rep.p_acc is not None:
        rep.meta["p_acc_distance"] = math.sqrt(rep.p_acc)
    return rep


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise arithmetic mean over successful reports."""
    ok = [r for r in reports if r.success]
    out = MetricsReport(success=bool(ok))
    for k in METRIC_FIELDS:
        vals = [getattr(r, k) for r in ok if getattr(r, k) is not None]
        setattr(out, k, float(np.mean(vals)) if vals else None)
    return out


def report_fields() -> list[str]:
    return [f.name for f in fields(MetricsReport) if f.name != "meta"]
