"""Seeded campaigns: expand specs into trials, run them, aggregate per cell."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..metrics import METRIC_FIELDS, MetricsReport, TrajectoryLog, report
from .logio import LogError, ingest_log
from .scenarios import ConfigError, Scenario, resolve
from .trial import TrialSpec, make_planner, robot_spec, run_trial_safe

log = logging.getLogger(__name__)


@dataclass
class TrialResult:
    spec: TrialSpec  # a single repetition: repetitions == 1, seed already offset
    log: TrajectoryLog
    report: MetricsReport

    @property
    def reason(self) -> str:
        return str(self.log.meta.get("reason", "goal" if self.log.success else "failed"))


@dataclass
class CellSummary:
    """Aggregate of one (scenario, planner) cell.

    ``mean``/``std`` hold one entry per metric; ``None`` marks a dash
    (no successful trial carried that metric).
    """

    scenario: str
    planner: str
    trials: int
    failures: int
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)

    @property
    def all_failed(self) -> bool:
        return self.failures == self.trials


@dataclass
class CampaignSummary:
    cells: list[CellSummary] = field(default_factory=list)
    trials: list[TrialResult] = field(default_factory=list)

    def cell(self, scenario: str, planner: str) -> CellSummary:
        for c in self.cells:
            if (c.scenario, c.planner) == (scenario, planner):
                return c
        raise KeyError((scenario, planner))


def expand(specs: Sequence[TrialSpec]) -> list[TrialSpec]:
    """One spec per repetition; repetition ``i`` runs with ``seed + i``."""
    return [replace(s, seed=s.seed + i, repetitions=1)
            for s in specs for i in range(s.repetitions)]


def check(specs: Sequence[TrialSpec]) -> None:
    """Resolve scenarios and build planners up front so config mistakes
    surface before any trial runs."""
    for s in specs:
        if s.planner == "external-log":
            if "log" not in (s.overrides or {}):
                raise ConfigError(f"{s.scenario}: external-log spec needs a 'log' path")
            continue
        sc = resolve(s.scenario)
        robot = robot_spec((s.overrides or {}).get("robot"))
        sc.validate(robot)
        make_planner(s.planner, robot, s.overrides or {}, sc.goal_tolerance)


def _execute(spec: TrialSpec) -> TrialResult:
    if spec.planner == "external-log":
        try:
            tlog = ingest_log(spec.overrides["log"])
        except (OSError, LogError) as e:
            log.error("cannot ingest %s: %s", spec.overrides["log"], e)
            tlog = TrajectoryLog([0.0], np.zeros((1, 3)), np.zeros((1, 2)), np.zeros((1, 3)),
                                 np.zeros((1, 3)), success=False, meta={"reason": f"error: {e}"})
        tlog.meta.setdefault("scenario", str(spec.scenario))
    else:
        scenario: Scenario = resolve(spec.scenario)
        tlog = run_trial_safe(spec, scenario)
    try:
        rep = report(tlog)
    except ValueError as e:
        tlog.success = False
        tlog.meta["reason"] = f"error: {e}"
        rep = report(tlog)
    return TrialResult(spec, tlog, rep)


def aggregate(results: Sequence[TrialResult]) -> CampaignSummary:
    """Per-cell mean and population std over successful trials, in first-seen order."""
    groups: dict[tuple[str, str], list[TrialResult]] = {}
    for r in results:
        key = (str(r.log.meta.get("scenario", r.spec.scenario)), r.spec.planner)
        groups.setdefault(key, []).append(r)
    cells = []
    for (scenario, planner), rs in groups.items():
        ok = [r.report for r in rs if r.report.success]
        mean, std = {}, {}
        for k in METRIC_FIELDS:
            vals = [getattr(r, k) for r in ok if getattr(r, k) is not None]
            mean[k] = float(np.mean(vals)) if vals else None
            std[k] = float(np.std(vals)) if vals else None
        cells.append(CellSummary(scenario, planner, len(rs), len(rs) - len(ok), mean, std))
    return CampaignSummary(cells, list(results))


def run_campaign(specs: Sequence[TrialSpec], workers: Optional[int] = 1) -> CampaignSummary:
    """Run every repetition of every spec and aggregate.

    With ``workers > 1`` trials run in a process pool; results are still
    collected in spec order, so the summary does not depend on scheduling.
    """
    specs = list(specs)
    if not specs:
        raise ConfigError("campaign needs at least one trial spec")
    check(specs)
    trials = expand(specs)
    if workers is None or workers <= 1 or len(trials) == 1:
        results = [_execute(t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, trials))
    return aggregate(results)
