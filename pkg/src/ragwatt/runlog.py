"""Append-only JSONL run logs and their integrity verifier.

Each line is one run record tagged with a schema version.  Writes flush
per record so an interrupted experiment leaves every completed line
intact.  verify_log recomputes every stage energy and the folded totals
from the recorded durations and pins them against the stored values,
naming each offending record and field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, List, Optional, Union

from .errors import ConfigurationError, SchemaError, SchemaVersionError
from .pipeline import RunRecord, stage_energy_kwh, StageSpec, Executor
from .power import ProfileRegistry, StageKind, builtin_profiles, total_query_energy

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "LogWriter",
    "write_records",
    "read_records",
    "iter_raw",
    "verify_log",
    "Mismatch",
    "bundled_golden_log_path",
]

PathLike = Union[str, Path]


def bundled_golden_log_path() -> Path:
    """The committed golden run log regenerated by scripts/make_golden_log.py."""
    from importlib import resources

    return Path(str(resources.files("ragwatt") / "data" / "golden_runs.jsonl"))


def record_to_line(record: RunRecord) -> str:
    payload = {"schema": SCHEMA_VERSION}
    payload.update(record.to_dict())
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class LogWriter:
    """Writes run records to a JSONL log, flushing after every record."""

    def __init__(self, path: PathLike, append: bool = True) -> None:
        self.path = Path(path)
        mode = "a" if append else "w"
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle: Optional[IO[str]] = open(self.path, mode, encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot open run log {self.path}: {exc}") from exc

    def write(self, record: RunRecord) -> None:
        if self._handle is None:
            raise ConfigurationError("run log already closed")
        self._handle.write(record_to_line(record) + "\n")
        self._handle.flush()
        os.fsync(self._handle.fileno())

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def write_records(path: PathLike, records: Iterable[RunRecord], append: bool = False) -> None:
    with LogWriter(path, append=append) as writer:
        for record in records:
            writer.write(record)


def iter_raw(path: PathLike) -> Iterator[dict]:
    """Yields the raw JSON objects of a log, skipping blank lines."""
    log = Path(path)
    if not log.exists():
        raise ConfigurationError(f"run log not found: {log}")
    with open(log, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{log}:{lineno}: not valid JSON ({exc})") from exc


def read_records(path: PathLike) -> List[RunRecord]:
    """Loads a log strictly: schema version must match, records must parse."""
    records = []
    for lineno, payload in enumerate(iter_raw(path), start=1):
        version = payload.get("schema")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(found=version, expected=SCHEMA_VERSION)
        try:
            records.append(RunRecord.from_dict(payload))
        except (SchemaError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad record ({exc})") from exc
    return records


@dataclass(frozen=True)
class Mismatch:
    """One field whose stored value disagrees with recomputation."""

    line: int
    question_id: str
    pipeline: str
    field: str
    stored: float
    recomputed: float

    def describe(self) -> str:
        return (
            f"line {self.line} ({self.pipeline}/{self.question_id}): {self.field} "
            f"stored {self.stored!r}, recomputed {self.recomputed!r}"
        )


def _recompute_trace_energy(trace, profiles: ProfileRegistry) -> float:
    if trace.status == "error":
        return 0.0
    stage = StageSpec(
        kind=StageKind(trace.kind),
        executor=Executor(trace.executor),
        model_id=trace.model_id,
    )
    return stage_energy_kwh(stage, trace.duration_s, profiles)


def verify_log(path: PathLike, profiles: Optional[ProfileRegistry] = None) -> List[Mismatch]:
    """Recomputes every energy figure in a log from its durations.

    Returns an empty list when the log is internally consistent.  Any
    stored per-stage energy or breakdown component that differs from the
    recomputed value (exact float equality, since the recomputation is
    deterministic) is reported as a Mismatch.
    """
    registry = profiles if profiles is not None else builtin_profiles()
    mismatches: List[Mismatch] = []
    for lineno, record in enumerate(read_records(path), start=1):
        pairs = []
        for index, trace in enumerate(record.traces):
            expected = _recompute_trace_energy(trace, registry)
            if trace.energy_kwh != expected:
                mismatches.append(
                    Mismatch(
                        line=lineno,
                        question_id=record.question_id,
                        pipeline=record.pipeline,
                        field=f"traces[{index}].energy_kwh",
                        stored=trace.energy_kwh,
                        recomputed=expected,
                    )
                )
            pairs.append((trace.kind, expected))
        expected_breakdown = total_query_energy(pairs)
        stored = record.energy
        for field_name in ("retrieval_kwh", "inference_kwh", "hallucination_kwh", "total_kwh"):
            stored_value = getattr(stored, field_name)
            expected_value = getattr(expected_breakdown, field_name)
            if stored_value != expected_value:
                mismatches.append(
                    Mismatch(
                        line=lineno,
                        question_id=record.question_id,
                        pipeline=record.pipeline,
                        field=f"energy.{field_name}",
                        stored=stored_value,
                        recomputed=expected_value,
                    )
                )
    return mismatches
