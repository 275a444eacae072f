"""Command line entry point: ``mmbench run|score|list-scenarios|export-plots``.

Exit codes: 0 when the command completed (a campaign with failed trials
still counts), 2 for configuration errors, 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core_types import Pose2D
from .harness.campaign import run_campaign
from .harness.emit import IoError, emit, summary_document
from .harness.logio import LogError, ingest_log
from .harness.scenarios import ConfigError, builtin, builtin_ids
from .harness.trial import PLANNERS, TrialSpec
from .metrics import report

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
DEFAULT_REPETITIONS = 10

log = logging.getLogger("mmbench")


def specs_from_config(doc: dict) -> tuple[list[TrialSpec], dict]:
    """Trial specs plus campaign options (``workers``, ``out``) from a config mapping.

    Either an explicit ``trials`` list, or ``scenarios`` x ``planners``
    with shared ``seed``, ``repetitions`` and ``overrides``.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {"trials", "scenarios", "planners", "seed", "repetitions", "overrides", "workers", "out"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    opts = {k: doc[k] for k in ("workers", "out") if k in doc}
    try:
        if "trials" in doc:
            specs = [TrialSpec(t["scenario"], t["planner"], int(t.get("seed", 0)),
                               int(t.get("repetitions", DEFAULT_REPETITIONS)),
                               dict(t.get("overrides") or {})) for t in doc["trials"]]
        else:
            scenarios = doc.get("scenarios") or []
            planners = doc.get("planners") or list(PLANNERS)
            specs = [TrialSpec(s, p, int(doc.get("seed", 0)),
                               int(doc.get("repetitions", DEFAULT_REPETITIONS)),
                               dict(doc.get("overrides") or {}))
                     for s in scenarios for p in planners]
    except (KeyError, TypeError) as e:
        raise ConfigError(f"bad trial entry: {e}") from e
    if not specs:
        raise ConfigError("config defines no trials")
    return specs, opts


def _print_summary(summary) -> None:
    doc = summary_document(summary)["cells"]
    for scenario in doc:
        for planner, cell in doc[scenario].items():
            m = cell["mean"]
            vals = " ".join(f"{k}={'-' if v is None else f'{v:.3f}'}" for k, v in m.items())
            print(f"{scenario:<22} {planner:<4} ok={cell['trials'] - cell['failures']}/{cell['trials']} {vals}")


def cmd_run(args) -> int:
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from e
        specs, opts = specs_from_config(doc)
    else:
        if not args.scenario:
            raise ConfigError("give --config or at least one --scenario")
        specs, opts = specs_from_config({
            "scenarios": args.scenario, "planners": args.planner or list(PLANNERS),
            "seed": args.seed, "repetitions": args.repetitions})
    workers = args.workers if args.workers is not None else int(opts.get("workers", 1))
    out = Path(args.out if args.out is not None else opts.get("out", "results"))
    summary = run_campaign(specs, workers=workers)
    emit(summary, out)
    if not args.no_plots:
        from .plotting import export_plots
        export_plots(out)
    _print_summary(summary)
    print(f"results written to {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    goal = Pose2D(*args.goal) if args.goal else None
    tlog = ingest_log(args.log, goal=goal)
    rep = report(tlog)
    doc = {"success": rep.success, **rep.values(), "meta": rep.meta}
    print(json.dumps(doc, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_list(args) -> int:
    for sid in builtin_ids():
        sc = builtin(sid)
        print(f"{sid:<22} {sc.width:g}x{sc.height:g} m  timeout {sc.timeout:g} s")
    return EXIT_OK


def cmd_export(args) -> int:
    from .plotting import export_plots
    for p in export_plots(args.results, args.out, args.format):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmbench", description="Local-planner benchmark for a mobile manipulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a campaign")
    r.add_argument("--config", help="JSON campaign file")
    r.add_argument("--scenario", action="append", help="scenario id or file (repeatable)")
    r.add_argument("--planner", action="append", choices=PLANNERS, help="planner (repeatable)")
    r.add_argument("--repetitions", type=int, default=DEFAULT_REPETITIONS)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", help="output directory (default: results)")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="metrics for an external log CSV")
    s.add_argument("log")
    s.add_argument("--goal", type=float, nargs=3, metavar=("X", "Y", "THETA"))
    s.set_defaults(func=cmd_score)

    ls = sub.add_parser("list-scenarios", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)

    e = sub.add_parser("export-plots", help="render figures from a results directory")
    e.add_argument("results")
    e.add_argument("--out")
    e.add_argument("--format", default="png")
    e.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LogError) as e:
        print(f"mmbench: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, OSError) as e:
        print(f"mmbench: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
