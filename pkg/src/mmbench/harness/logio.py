"""Trajectory log CSV files.

One row per control tick with the columns in :data:`COLUMNS`. Floats are
written with ``repr`` so a write/read round trip is exact. Two optional
sidecars carry what the CSV cannot: ``<stem>.path.csv`` (global path
waypoints) and ``<stem>.meta.json`` (goal pose, success flag, trial meta).
Logs produced by other planners only need the main CSV.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..core_types import Pose2D
from ..global_planner import GlobalPath
from ..metrics import TrajectoryLog

COLUMNS = ("t", "base_x", "base_y", "base_theta", "cmd_v", "cmd_omega",
           "ee_exp_x", "ee_exp_y", "ee_exp_z", "ee_act_x", "ee_act_y", "ee_act_z")
PATH_COLUMNS = ("x", "y", "theta")


class LogError(ValueError):
    pass


class ParseError(LogError):
    def __init__(self, path, line: int, column: str, text: str):
        super().__init__(f"{path}:{line}: column {column!r}: cannot parse {text!r}")
        self.line = line
        self.column = column


class SchemaError(LogError):
    def __init__(self, path, missing: list[str]):
        super().__init__(f"{path}: missing column(s) {', '.join(missing)}")
        self.missing = missing


class NonMonotonicTime(LogError):
    def __init__(self, path, line: int):
        super().__init__(f"{path}:{line}: timestamp does not increase")
        self.line = line


def sidecars(path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("")
    return stem.with_name(stem.name + ".path.csv"), stem.with_name(stem.name + ".meta.json")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def write_log(log: TrajectoryLog, path, sidecar: bool = True) -> Path:
    """Write ``log`` as CSV (plus sidecars unless ``sidecar`` is false)."""
    path = Path(path)
    data = np.column_stack([log.t, log.base, log.cmd, log.ee_expected, log.ee_actual])
    _write_rows(path, COLUMNS, data)
    if sidecar:
        path_csv, meta_json = sidecars(path)
        if log.global_path is not None:
            _write_rows(path_csv, PATH_COLUMNS, log.global_path.waypoints)
        goal = None if log.goal is None else [log.goal.x, log.goal.y, log.goal.theta]
        doc = {"goal": goal, "success": bool(log.success), "meta": log.meta}
        meta_json.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _read_table(path: Path, required) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(path, list(required)) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(path, missing)
        idx = [header.index(c) for c in required]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            row = []
            for name, i in zip(required, idx):
                text = rec[i] if i < len(rec) else ""
                try:
                    row.append(float(text))
                except ValueError:
                    raise ParseError(path, line, name, text) from None
            rows.append(row)
    return np.array(rows, dtype=float).reshape(-1, len(required))


def ingest_log(path, global_path=None, goal=None) -> TrajectoryLog:
    """Read a log CSV into a validated :class:`TrajectoryLog`.

    Sidecars next to the file supply the global path and goal unless they
    are passed explicitly. Without a meta sidecar the trial is assumed to
    have succeeded.
    """
    path = Path(path)
    data = _read_table(path, COLUMNS)
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if len(bad):
        raise NonMonotonicTime(path, int(bad[0]) + 3)
    path_csv, meta_json = sidecars(path)
    if global_path is None and path_csv.is_file():
        global_path = GlobalPath(_read_table(path_csv, PATH_COLUMNS))
    success, meta = True, {}
    if meta_json.is_file():
        doc = json.loads(meta_json.read_text(encoding="utf-8"))
        success = bool(doc.get("success", True))
        meta = doc.get("meta", {})
        if goal is None and doc.get("goal") is not None:
            goal = Pose2D(*doc["goal"])
    return TrajectoryLog(t, data[:, 1:4], data[:, 4:6], data[:, 6:9], data[:, 9:12],
                         global_path=global_path, goal=goal, success=success, meta=meta)
