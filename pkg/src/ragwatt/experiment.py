"""Experiment orchestration: question sets, run windows, and the run loop.

An experiment crosses run windows x pipelines x questions, executes every
cell through one driver, and appends each finished record to a JSONL log,
flushing as it goes so interrupted campaigns keep everything completed so
far.  Windows model time-of-day measurement blocks; live runs wait for
their window (or are labeled as forced), synthetic runs jump a simulated
clock to the window instead.
"""

from __future__ import annotations

import csv
import json
import sys
import time as _time
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
from zoneinfo import ZoneInfo

from .errors import ConfigurationError, DatasetError, SchemaVersionError
from .measurement import TokenizerSpec, utc_now
from .pipeline import (
    DEFAULT_THEMES,
    DEFAULT_TOP_K,
    DriverSet,
    PipelineSpec,
    builtin_pipelines,
    execute_pipeline,
)
from .runlog import LogWriter

__all__ = [
    "BLOOM_CLASSES",
    "QuestionItem",
    "RunWindow",
    "WINDOW_LABELS",
    "DEFAULT_WINDOW_HOURS",
    "ExperimentConfig",
    "CONFIG_VERSION",
    "load_questions",
    "bundled_questions_path",
    "bundled_corpus_path",
    "within_window",
    "wait_for_window",
    "build_driver_set",
    "pipelines_from_config",
    "run_experiment",
]

CONFIG_VERSION = 1

BLOOM_CLASSES = (
    "Knowledge",
    "Comprehension",
    "Application",
    "Analysis",
    "Evaluation",
    "Creation",
)

WINDOW_LABELS = ("random", "morning", "afternoon", "evening")
DEFAULT_WINDOW_HOURS: Dict[str, Tuple[str, str]] = {
    "morning": ("08:00", "10:30"),
    "afternoon": ("14:00", "16:30"),
    "evening": ("20:00", "22:30"),
}


@dataclass(frozen=True)
class QuestionItem:
    """One benchmark question with its cognitive-level label."""

    id: str
    text: str
    bloom_class: str
    tags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id or not self.text:
            raise DatasetError("questions need a non-empty id and text")
        if self.bloom_class not in BLOOM_CLASSES:
            raise DatasetError(
                f"question {self.id!r} has unknown bloom_class {self.bloom_class!r}; "
                f"expected one of {', '.join(BLOOM_CLASSES)}"
            )
        object.__setattr__(self, "tags", tuple(self.tags))


def _parse_clock(value: str) -> time:
    try:
        return datetime.strptime(value, "%H:%M").time()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad clock time {value!r}; expected HH:MM") from exc


@dataclass(frozen=True)
class RunWindow:
    """A time-of-day measurement block, or "random" for anytime runs."""

    label: str
    start: Optional[time] = None
    end: Optional[time] = None
    timezone: str = "UTC"

    def __post_init__(self) -> None:
        if self.label not in WINDOW_LABELS:
            raise ConfigurationError(
                f"unknown window label {self.label!r}; expected one of {', '.join(WINDOW_LABELS)}"
            )
        if self.label == "random":
            if self.start is not None or self.end is not None:
                raise ConfigurationError("the random window takes no start/end times")
            return
        start, end = self.start, self.end
        if start is None or end is None:
            default_start, default_end = DEFAULT_WINDOW_HOURS[self.label]
            start = start if start is not None else _parse_clock(default_start)
            end = end if end is not None else _parse_clock(default_end)
            object.__setattr__(self, "start", start)
            object.__setattr__(self, "end", end)
        if self.start >= self.end:
            raise ConfigurationError(
                f"window {self.label!r} must start before it ends "
                f"({self.start} >= {self.end})"
            )
        self.tzinfo()  # fail fast on unknown zones

    def is_random(self) -> bool:
        return self.label == "random"

    def tzinfo(self) -> ZoneInfo:
        try:
            return ZoneInfo(self.timezone)
        except Exception as exc:
            raise ConfigurationError(f"unknown timezone {self.timezone!r}") from exc

    @classmethod
    def parse(cls, value: Union[str, dict], timezone: str = "UTC") -> "RunWindow":
        if isinstance(value, str):
            return cls(label=value, timezone=timezone)
        if isinstance(value, dict):
            start = value.get("start")
            end = value.get("end")
            return cls(
                label=value.get("label", ""),
                start=_parse_clock(start) if start is not None else None,
                end=_parse_clock(end) if end is not None else None,
                timezone=value.get("timezone", timezone),
            )
        raise ConfigurationError(f"cannot parse run window from {value!r}")


def within_window(window: RunWindow, now: datetime) -> bool:
    """True when now falls in the half-open [start, end) of the window."""
    if window.is_random():
        return True
    if now.tzinfo is None:
        raise ConfigurationError("window checks need a timezone-aware time")
    local = now.astimezone(window.tzinfo()).time()
    return window.start <= local < window.end


def wait_for_window(
    window: RunWindow,
    *,
    now_fn: Callable[[], datetime] = utc_now,
    sleep_fn: Callable[[float], None] = _time.sleep,
    stream=None,
) -> datetime:
    """Blocks until the window opens; returns the first in-window time."""
    out = stream if stream is not None else sys.stderr
    while True:
        now = now_fn()
        if within_window(window, now):
            return now
        local = now.astimezone(window.tzinfo())
        target = datetime.combine(local.date(), window.start, tzinfo=window.tzinfo())
        if local.time() >= window.start:
            target += timedelta(days=1)
        pause = max(1.0, (target - local).total_seconds())
        print(
            f"waiting {pause:.0f}s for the {window.label} window "
            f"({window.start:%H:%M}-{window.end:%H:%M} {window.timezone})",
            file=out,
        )
        sleep_fn(pause)


def bundled_questions_path() -> Path:
    return Path(str(resources.files("ragwatt") / "data" / "questions.csv"))


def bundled_corpus_path() -> Path:
    return Path(str(resources.files("ragwatt") / "data" / "corpus.jsonl"))


def _question_from_row(row: dict, where: str) -> QuestionItem:
    try:
        raw_tags = row.get("tags") or ()
        if isinstance(raw_tags, str):
            tags = tuple(t for t in raw_tags.split(";") if t)
        else:
            tags = tuple(raw_tags)
        return QuestionItem(
            id=row["id"],
            text=row["text"],
            bloom_class=row["bloom_class"],
            tags=tags,
        )
    except KeyError as exc:
        raise DatasetError(f"{where}: question row missing field {exc}") from exc
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from exc


def load_questions(path: Union[str, Path]) -> List[QuestionItem]:
    """Loads a question set from CSV (semicolon-joined tags) or JSON."""
    source = Path(path)
    if not source.exists():
        raise DatasetError(f"question file not found: {source}")
    questions: List[QuestionItem] = []
    if source.suffix.lower() == ".json":
        try:
            rows = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{source}: not valid JSON ({exc})") from exc
        if not isinstance(rows, list):
            raise DatasetError(f"{source}: expected a JSON list of questions")
        for i, row in enumerate(rows, start=1):
            questions.append(_question_from_row(row, f"{source}:item {i}"))
    else:
        with open(source, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            for i, row in enumerate(reader, start=2):  # header is line 1
                questions.append(_question_from_row(row, f"{source}:line {i}"))
    if not questions:
        raise DatasetError(f"{source}: no questions found")
    seen: Dict[str, int] = {}
    for q in questions:
        if q.id in seen:
            raise DatasetError(f"{source}: duplicate question id {q.id!r}")
        seen[q.id] = 1
    return questions


@dataclass
class ExperimentConfig:
    """Everything one experiment invocation needs, as parsed from config."""

    pipelines: List[str]
    log_path: Union[str, Path]
    driver: str = "synthetic"
    seed: Optional[int] = None
    windows: List[RunWindow] = field(default_factory=lambda: [RunWindow("random")])
    repetitions: int = 1
    questions_path: Optional[Union[str, Path]] = None
    corpus_path: Optional[Union[str, Path]] = None
    endpoint: Optional[str] = None
    embedding_endpoint: Optional[str] = None
    embedding_model: Optional[str] = None
    generation_model: str = "gpt-4o-mini"
    classifier_model: str = "gpt-4o"
    verifier_model: str = "gpt-4o-mini"
    top_k: int = DEFAULT_TOP_K
    threshold: float = 0.5
    themes: Sequence[str] = DEFAULT_THEMES
    timezone: str = "UTC"
    force: bool = False
    append: bool = False
    limit: Optional[int] = None

    def __post_init__(self) -> None:
        self.windows = [
            w if isinstance(w, RunWindow) else RunWindow.parse(w, timezone=self.timezone)
            for w in self.windows
        ]
        if not self.pipelines:
            raise ConfigurationError("experiment needs at least one pipeline")
        if self.driver not in ("synthetic", "live"):
            raise ConfigurationError(
                f"unknown driver {self.driver!r}; expected synthetic or live"
            )
        if self.driver == "synthetic" and self.seed is None:
            raise ConfigurationError("synthetic runs require a seed")
        if self.driver == "live" and not self.endpoint:
            raise ConfigurationError("live runs require an endpoint")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.limit is not None and self.limit < 1:
            raise ConfigurationError("limit must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        version = data.get("config_version")
        if version != CONFIG_VERSION:
            raise SchemaVersionError(found=version, expected=CONFIG_VERSION)
        tz = data.get("timezone", "UTC")
        windows = [
            RunWindow.parse(w, timezone=tz) for w in data.get("windows", ["random"])
        ]
        known = {
            "pipelines",
            "log_path",
            "driver",
            "seed",
            "repetitions",
            "questions_path",
            "corpus_path",
            "endpoint",
            "embedding_endpoint",
            "embedding_model",
            "generation_model",
            "classifier_model",
            "verifier_model",
            "top_k",
            "threshold",
            "themes",
            "force",
            "append",
            "limit",
        }
        unknown = set(data) - known - {"config_version", "windows", "timezone"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = {key: data[key] for key in known if key in data}
        return cls(windows=windows, timezone=tz, **kwargs)

    def origin(self) -> str:
        if self.driver == "synthetic":
            return f"synthetic:seed={self.seed}"
        return f"live:{self.endpoint}"


def pipelines_from_config(config: ExperimentConfig) -> Dict[str, PipelineSpec]:
    catalogue = builtin_pipelines(
        generation_model=config.generation_model,
        classifier_model=config.classifier_model,
        verifier_model=config.verifier_model,
        top_k=config.top_k,
        threshold=config.threshold,
    )
    selected = {}
    for name in config.pipelines:
        if name not in catalogue:
            raise ConfigurationError(
                f"unknown pipeline {name!r}; available: {', '.join(sorted(catalogue))}"
            )
        selected[name] = catalogue[name]
    return selected


def build_driver_set(config: ExperimentConfig) -> DriverSet:
    """Constructs the driver stack an experiment config describes."""
    from .drivers import ChatCompletionsClient, LiveDriver, RemoteEmbedder, SyntheticDriver

    if config.driver == "synthetic":
        return DriverSet(driver=SyntheticDriver(seed=config.seed))

    chat = ChatCompletionsClient(config.endpoint)
    needs_store = any(
        name in ("cnz", "ndc") for name in config.pipelines
    )
    store = None
    if needs_store:
        from .grounding import HashEmbedder
        from .store import VectorStore, load_corpus

        if config.embedding_endpoint and config.embedding_model:
            embedder = RemoteEmbedder(config.embedding_endpoint, config.embedding_model)
        else:
            embedder = HashEmbedder()
        corpus = config.corpus_path if config.corpus_path else bundled_corpus_path()
        store = VectorStore(embedder)
        for chunk in load_corpus(corpus):
            store.add(chunk)
    driver = LiveDriver(chat, store, themes=config.themes)
    return DriverSet(driver=driver, tokenizer=TokenizerSpec())


def _jump_to_window(driver, window: RunWindow) -> None:
    """Moves a simulated clock forward to the window's next opening."""
    sim = getattr(driver, "simulated", None)
    if sim is None or window.is_random():
        return
    local = sim.wall_now().astimezone(window.tzinfo())
    if window.start <= local.time() < window.end:
        return
    target = datetime.combine(local.date(), window.start, tzinfo=window.tzinfo())
    if local.time() >= window.start:
        target += timedelta(days=1)
    driver.jump_to(target)


def run_experiment(
    config: ExperimentConfig,
    drivers: Optional[DriverSet] = None,
    *,
    now_fn: Optional[Callable[[], datetime]] = None,
    sleep_fn: Callable[[float], None] = _time.sleep,
    stream=None,
) -> dict:
    """Runs windows x repetitions x pipelines x questions and logs each run.

    Records append to the log one by one, flushed on write; the summary
    reports how many runs finished in each status.  Question order is the
    dataset order, never shuffled, so campaigns are comparable.
    """
    drivers = drivers if drivers is not None else build_driver_set(config)
    questions = load_questions(
        config.questions_path if config.questions_path else bundled_questions_path()
    )
    if config.limit is not None:
        questions = questions[: config.limit]
    pipelines = pipelines_from_config(config)
    simulated = getattr(drivers.driver, "simulated", None)
    if now_fn is None:
        now_fn = drivers.wall_now
    counts = {"ok": 0, "degraded": 0, "error": 0}
    origin = config.origin()
    with LogWriter(config.log_path, append=config.append) as writer:
        for window in config.windows:
            _jump_to_window(drivers.driver, window)
            for _rep in range(config.repetitions):
                for name in config.pipelines:
                    spec = pipelines[name]
                    for question in questions:
                        label = window.label
                        if simulated is None and not window.is_random():
                            if not within_window(window, now_fn()):
                                if config.force:
                                    label = f"{window.label}+forced"
                                else:
                                    wait_for_window(
                                        window,
                                        now_fn=now_fn,
                                        sleep_fn=sleep_fn,
                                        stream=stream,
                                    )
                        record = execute_pipeline(
                            spec,
                            question,
                            drivers,
                            run_window=label,
                            origin=origin,
                        )
                        writer.write(record)
                        counts[record.status] += 1
    total = sum(counts.values())
    return {
        "records": total,
        "ok": counts["ok"],
        "degraded": counts["degraded"],
        "error": counts["error"],
        "log_path": str(config.log_path),
        "pipelines": list(config.pipelines),
        "windows": [w.label for w in config.windows],
        "questions": len(questions),
    }
