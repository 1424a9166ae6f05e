"""Command line interface.

Four subcommands: run (execute an experiment from a config file),
estimate (one-off stage energy arithmetic), replay (verify a run log's
energy accounting), and report (aggregate a run log into JSON/CSV/SVG).

Exit codes: 0 on success, 1 for validation problems (bad config, bad
files, tampered logs), 2 for execution failures.  Diagnostics go to
stderr; machine-readable output goes to files, or to stdout when
--stdout json is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .analysis import build_report, emit_report, load_annotations
from .errors import (
    ConfigurationError,
    ExecutionError,
    ValidationError,
)
from .experiment import ExperimentConfig, run_experiment
from .power import (
    builtin_profiles,
    cpu_stage_energy_kwh,
    llm_stage_energy_kwh,
)
from .runlog import read_records, verify_log

__all__ = ["main", "build_parser"]

ESTIMATE_MODES = ("llm", "retrieval", "classification", "hallucination-cpu", "hallucination-llm")

CPU_PROFILE_NAME = "cpu"
CPU_MODES = ("retrieval", "hallucination-cpu")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragwatt",
        description="Per-query energy accounting for retrieval-augmented chatbots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--driver", help="override the configured driver (synthetic|live)")
    run.add_argument("--seed", type=int, help="override the synthetic seed")
    run.add_argument("--log", help="override the run log path")
    run.add_argument("--limit", type=int, help="run only the first N questions")
    run.add_argument("--force", action="store_true", help="run outside windows, labeled")
    run.add_argument("--append", action="store_true", help="append to an existing log")
    run.add_argument("--stdout", dest="stdout_format", metavar="FORMAT",
                     help="write the summary to stdout (json)")
    run.set_defaults(func=cmd_run)

    estimate = sub.add_parser("estimate", help="energy of one stage duration")
    estimate.add_argument("duration_s", help="stage duration in seconds")
    estimate.add_argument("profile", help="hardware profile (e.g. gpt-4o-mini, cpu)")
    estimate.add_argument("mode", help="stage mode: " + ", ".join(ESTIMATE_MODES))
    estimate.set_defaults(func=cmd_estimate)

    replay = sub.add_parser("replay", help="verify a run log's energy accounting")
    replay.add_argument("log", help="run log to verify")
    replay.add_argument("--stdout", dest="stdout_format", metavar="FORMAT",
                        help="write the verification result to stdout (json)")
    replay.set_defaults(func=cmd_replay)

    report = sub.add_parser("report", help="aggregate a run log into a report")
    report.add_argument("log", help="run log to aggregate")
    report.add_argument("--annotations", help="statement annotations (JSON or CSV)")
    report.add_argument("--formats", default="json,csv,svg",
                        help="comma-separated output formats (json,csv,svg)")
    report.add_argument("--outdir", help="output directory (default: <log>.report)")
    report.add_argument("--stdout", dest="stdout_format", metavar="FORMAT",
                        help="write the report to stdout (json) instead of files")
    report.set_defaults(func=cmd_report)

    return parser


def _check_stdout_format(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    if value != "json":
        raise ValidationError(f"unsupported --stdout format {value!r}; only json")
    return value


def cmd_run(args: argparse.Namespace) -> int:
    stdout_format = _check_stdout_format(args.stdout_format)
    config_path = Path(args.config)
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{config_path}: not valid JSON ({exc})") from exc
    if args.driver:
        data["driver"] = args.driver
    if args.seed is not None:
        data["seed"] = args.seed
    if args.log:
        data["log_path"] = args.log
    if args.limit is not None:
        data["limit"] = args.limit
    if args.force:
        data["force"] = True
    if args.append:
        data["append"] = True
    config = ExperimentConfig.from_dict(data)
    summary = run_experiment(config)
    print(
        f"ran {summary['records']} queries: {summary['ok']} ok, "
        f"{summary['degraded']} degraded, {summary['error']} error",
        file=sys.stderr,
    )
    print(f"log: {summary['log_path']}", file=sys.stderr)
    if stdout_format == "json":
        print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    try:
        duration_s = float(args.duration_s)
    except ValueError:
        raise ValidationError(f"duration must be a number, got {args.duration_s!r}") from None
    mode = args.mode
    if mode not in ESTIMATE_MODES:
        raise ValidationError(
            f"unknown mode {mode!r}; expected one of {', '.join(ESTIMATE_MODES)}"
        )
    profiles = builtin_profiles()
    if mode in CPU_MODES:
        if args.profile != CPU_PROFILE_NAME:
            raise ValidationError(
                f"mode {mode!r} runs on the cpu profile; got {args.profile!r}"
            )
        kwh = cpu_stage_energy_kwh(duration_s, profiles.cpu)
    else:
        profile = profiles.llm(args.profile)
        kwh = llm_stage_energy_kwh(duration_s, profile)
    print(f"{kwh:.4g} kWh")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    stdout_format = _check_stdout_format(args.stdout_format)
    records = read_records(args.log)
    mismatches = verify_log(args.log)
    if stdout_format == "json":
        print(
            json.dumps(
                {
                    "records": len(records),
                    "mismatches": [
                        {
                            "line": m.line,
                            "question_id": m.question_id,
                            "pipeline": m.pipeline,
                            "field": m.field,
                            "stored": m.stored,
                            "recomputed": m.recomputed,
                        }
                        for m in mismatches
                    ],
                },
                sort_keys=True,
            )
        )
    if mismatches:
        print(
            f"log failed verification: {len(mismatches)} mismatched "
            f"field{'s' if len(mismatches) != 1 else ''}",
            file=sys.stderr,
        )
        for mismatch in mismatches:
            print(f"  {mismatch.describe()}", file=sys.stderr)
        return 1
    print(f"log verified: {len(records)} records, energy accounting consistent",
          file=sys.stderr)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    stdout_format = _check_stdout_format(args.stdout_format)
    records = read_records(args.log)
    annotations = load_annotations(args.annotations) if args.annotations else ()
    report = build_report(records, annotations)
    if stdout_format == "json":
        print(report.to_json())
        return 0
    formats = tuple(f for f in (part.strip() for part in args.formats.split(",")) if f)
    if not formats:
        raise ValidationError("no output formats requested")
    outdir = Path(args.outdir) if args.outdir else Path(str(args.log) + ".report")
    written = emit_report(report, records, outdir, formats=formats)
    for paths in written.values():
        for path in paths:
            print(f"wrote {path}", file=sys.stderr)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ExecutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
