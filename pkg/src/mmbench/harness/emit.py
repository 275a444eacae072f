"""Write a campaign to disk: summary (JSON + CSV), per-trial rows, logs and plot series.

Every number is written with ``repr`` and every mapping with sorted keys,
so the same summary always produces the same bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics import METRIC_FIELDS, REPORT_META, TrajectoryLog, resample, turn_angles
from .campaign import CampaignSummary, TrialResult
from .logio import write_log

DASH = "-"
SUMMARY_COLUMNS = ("scenario", "planner", "trials", "failures") + tuple(
    c for k in METRIC_FIELDS for c in (k, f"{k}_std"))
TRIAL_COLUMNS = ("scenario", "planner", "seed", "success", "reason", "replans") + METRIC_FIELDS + (
    "p_acc_distance",)


class IoError(OSError):
    pass


def _num(v) -> str:
    return DASH if v is None else repr(float(v))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def trial_stem(r: TrialResult) -> str:
    scenario = str(r.log.meta.get("scenario", r.spec.scenario))
    return f"{Path(scenario).stem}__{r.spec.planner}__{r.spec.seed}"


def summary_document(summary: CampaignSummary) -> dict:
    """Nested ``{scenario: {planner: cell}}`` mapping; dashes are ``null``."""
    doc: dict = {}
    for c in summary.cells:
        doc.setdefault(c.scenario, {})[c.planner] = {
            "trials": c.trials, "failures": c.failures,
            "mean": {k: c.mean.get(k) for k in METRIC_FIELDS},
            "std": {k: c.std.get(k) for k in METRIC_FIELDS},
        }
    return {"columns": list(METRIC_FIELDS), "notes": REPORT_META, "cells": doc}


def write_summary(summary: CampaignSummary, out: Path) -> None:
    text = json.dumps(summary_document(summary), sort_keys=True, indent=2) + "\n"
    (out / "summary.json").write_text(text, encoding="utf-8")
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for c in summary.cells:
            row = [c.scenario, c.planner, c.trials, c.failures]
            for k in METRIC_FIELDS:
                row += [_num(c.mean.get(k)), _num(c.std.get(k))]
            w.writerow(row)


def write_trials(summary: CampaignSummary, out: Path) -> None:
    with open(out / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in summary.trials:
            vals = r.report.values()
            w.writerow([r.log.meta.get("scenario", r.spec.scenario), r.spec.planner, r.spec.seed,
                        int(r.report.success), r.reason, r.log.meta.get("replans", 0),
                        *(_num(vals[k]) for k in METRIC_FIELDS),
                        _num(r.report.meta.get("p_acc_distance"))])


def _table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def ee_error_series(log: TrajectoryLog) -> np.ndarray:
    """``t, |e_x|, |e_y|, |e_z|`` per sample."""
    return np.column_stack([log.t, np.abs(log.ee_expected - log.ee_actual)])


def smoothness_series(log: TrajectoryLog) -> np.ndarray:
    """``x, y, turn angle`` per sample."""
    return np.column_stack([log.positions, turn_angles(log.positions)])


def path_pairs(log: TrajectoryLog) -> np.ndarray:
    """Global and travelled paths, both resampled to N points by arc length."""
    if log.global_path is None or log.n == 0:
        return np.zeros((0, 4))
    return np.column_stack([resample(log.global_path.xy, log.n), resample(log.positions, log.n)])


def write_series(r: TrialResult, out: Path) -> None:
    stem = trial_stem(r)
    _table(out / f"{stem}.ee_error.csv", ("t", "e_x", "e_y", "e_z"), ee_error_series(r.log))
    _table(out / f"{stem}.smoothness.csv", ("x", "y", "turn_angle"), smoothness_series(r.log))
    _table(out / f"{stem}.paths.csv", ("global_x", "global_y", "travelled_x", "travelled_y"),
           path_pairs(r.log))


def emit(summary: CampaignSummary, out, logs: bool = True, series: bool = True) -> Path:
    """Write ``summary.json``, ``summary.csv``, ``trials.csv`` and, per trial,
    ``logs/<stem>.csv`` (with sidecars) and ``series/<stem>.*.csv``."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_summary(summary, out)
        write_trials(summary, out)
        if logs:
            (out / "logs").mkdir(exist_ok=True)
        if series:
            (out / "series").mkdir(exist_ok=True)
        for r in summary.trials:
            if logs:
                write_log(r.log, out / "logs" / f"{trial_stem(r)}.csv")
            if series:
                write_series(r, out / "series")
    except OSError as e:
        raise IoError(f"cannot write results to {out}: {e}") from e
    return out
