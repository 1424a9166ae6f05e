"""Pipeline specifications and the instrumented executor.

A pipeline is an ordered list of typed stages; executing one against a
question produces a RunRecord holding per-stage durations, token counts
and energy.  Stage execution is delegated to a driver (live, synthetic
or replay) so the same orchestration code serves measurement, offline
testing and re-analysis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from .errors import ConfigurationError, SchemaError, StageError
from .measurement import TokenizerSpec, elapsed
from .power import (
    EnergyBreakdown,
    ProfileRegistry,
    StageKind,
    cpu_stage_energy_kwh,
    llm_stage_energy_kwh,
    total_query_energy,
)

__all__ = [
    "Executor",
    "StageSpec",
    "PipelineSpec",
    "StageTrace",
    "RunRecord",
    "StageOutcome",
    "StageDriver",
    "DriverSet",
    "ClassificationResult",
    "STATUS_OK",
    "STATUS_DEGRADED",
    "STATUS_ERROR",
    "DEFAULT_TOP_K",
    "DEFAULT_THEMES",
    "TOKENS_PER_WORD",
    "builtin_pipelines",
    "builtin_pipeline",
    "classify_query",
    "execute_pipeline",
    "stage_energy_kwh",
]

STATUS_OK = "ok"
STATUS_DEGRADED = "degraded"
STATUS_ERROR = "error"
_STATUSES = (STATUS_OK, STATUS_DEGRADED, STATUS_ERROR)

DEFAULT_TOP_K = 5
# Theme taxonomy for query classification; config may override per run.
DEFAULT_THEMES = ("pledges", "targets", "policy", "verification", "general")
DEFAULT_THEME = "general"

# Word caps translate to a provider max-token parameter at this rate; the
# model output is never truncated after the fact.
TOKENS_PER_WORD = 1.5


class Executor(str, enum.Enum):
    CPU = "cpu"
    LLM = "llm"


@dataclass(frozen=True)
class StageSpec:
    """One typed pipeline stage.

    params carries stage-local settings such as top_k for retrieval or
    threshold for the cosine verification route.
    """

    kind: StageKind
    executor: Executor
    model_id: Optional[str] = None
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        kind = StageKind(self.kind)
        executor = Executor(self.executor)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "executor", executor)
        if kind in (StageKind.CLASSIFICATION, StageKind.LLM_INFERENCE):
            if executor is not Executor.LLM:
                raise SchemaError(f"{kind.value} stage must run on the llm executor")
        if kind is StageKind.RETRIEVAL and executor is not Executor.CPU:
            raise SchemaError("retrieval stage must run on the cpu executor")
        if executor is Executor.LLM and not self.model_id:
            raise SchemaError(f"{kind.value} stage on llm executor needs a model_id")


@dataclass(frozen=True)
class PipelineSpec:
    """An ordered stage list plus an optional output length cap in words."""

    name: str
    stages: Tuple[StageSpec, ...]
    output_constraint_words: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("pipeline needs a non-empty name")
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise SchemaError(f"pipeline {self.name!r} has no stages")
        retrievals = sum(1 for s in self.stages if s.kind is StageKind.RETRIEVAL)
        if retrievals > 1:
            raise SchemaError(f"pipeline {self.name!r} has {retrievals} retrieval stages; max 1")
        if self.output_constraint_words is not None and self.output_constraint_words < 1:
            raise SchemaError("output_constraint_words must be >= 1")

    def max_output_tokens(self) -> Optional[int]:
        if self.output_constraint_words is None:
            return None
        return math.ceil(self.output_constraint_words * TOKENS_PER_WORD)


def builtin_pipelines(
    generation_model: str = "gpt-4o-mini",
    classifier_model: str = "gpt-4o",
    verifier_model: str = "gpt-4o-mini",
    top_k: int = DEFAULT_TOP_K,
    threshold: float = 0.5,
) -> Dict[str, PipelineSpec]:
    """The four stock workflows.

    cnz: retrieval, generation, then a CPU cosine filter over sentences.
    ndc: theme classification on the large model, retrieval, generation,
         then an LLM-judged sentence check.
    direct: a single uncapped generation call.
    direct-capped: direct with a 200-word output constraint.

    Model bindings are arguments, not constants: callers rebinding
    profiles in config get pipelines to match.
    """
    cnz = PipelineSpec(
        name="cnz",
        stages=(
            StageSpec(StageKind.RETRIEVAL, Executor.CPU, params={"top_k": top_k}),
            StageSpec(StageKind.LLM_INFERENCE, Executor.LLM, generation_model),
            StageSpec(
                StageKind.HALLUCINATION_CHECK, Executor.CPU, params={"threshold": threshold}
            ),
        ),
    )
    ndc = PipelineSpec(
        name="ndc",
        stages=(
            StageSpec(StageKind.CLASSIFICATION, Executor.LLM, classifier_model),
            StageSpec(StageKind.RETRIEVAL, Executor.CPU, params={"top_k": top_k}),
            StageSpec(StageKind.LLM_INFERENCE, Executor.LLM, generation_model),
            StageSpec(StageKind.HALLUCINATION_CHECK, Executor.LLM, verifier_model),
        ),
    )
    direct = PipelineSpec(
        name="direct",
        stages=(StageSpec(StageKind.LLM_INFERENCE, Executor.LLM, generation_model),),
    )
    capped = PipelineSpec(
        name="direct-capped",
        stages=(StageSpec(StageKind.LLM_INFERENCE, Executor.LLM, generation_model),),
        output_constraint_words=200,
    )
    return {spec.name: spec for spec in (cnz, ndc, direct, capped)}


def builtin_pipeline(name: str) -> PipelineSpec:
    pipelines = builtin_pipelines()
    try:
        return pipelines[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown pipeline {name!r}; available: {', '.join(sorted(pipelines))}"
        ) from None


@dataclass
class StageTrace:
    """What one executed stage looked like, as persisted in run logs."""

    kind: str
    executor: str
    model_id: Optional[str]
    start_offset_s: float
    duration_s: float
    input_tokens: Optional[int]
    output_tokens: Optional[int]
    status: str
    energy_kwh: float
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.duration_s < 0 or self.start_offset_s < 0:
            raise SchemaError("trace durations and offsets must be >= 0")
        if self.status not in _STATUSES:
            raise SchemaError(f"unknown stage status {self.status!r}")
        StageKind(self.kind)
        Executor(self.executor)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "executor": self.executor,
            "model_id": self.model_id,
            "start_offset_s": self.start_offset_s,
            "duration_s": self.duration_s,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "status": self.status,
            "energy_kwh": self.energy_kwh,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StageTrace":
        try:
            return cls(
                kind=data["kind"],
                executor=data["executor"],
                model_id=data.get("model_id"),
                start_offset_s=float(data["start_offset_s"]),
                duration_s=float(data["duration_s"]),
                input_tokens=data.get("input_tokens"),
                output_tokens=data.get("output_tokens"),
                status=data["status"],
                energy_kwh=float(data["energy_kwh"]),
                error=data.get("error"),
            )
        except KeyError as exc:
            raise SchemaError(f"stage trace missing field {exc}") from exc


@dataclass
class RunRecord:
    """One executed (pipeline, question) pair with its energy accounting."""

    question_id: str
    pipeline: str
    timestamp: datetime
    run_window: str
    origin: str
    traces: List[StageTrace]
    answer: str
    energy: EnergyBreakdown

    def __post_init__(self) -> None:
        if self.timestamp.tzinfo is None:
            raise SchemaError("run record timestamps must be timezone-aware")

    @property
    def status(self) -> str:
        statuses = {trace.status for trace in self.traces}
        if STATUS_ERROR in statuses:
            return STATUS_ERROR
        if STATUS_DEGRADED in statuses:
            return STATUS_DEGRADED
        return STATUS_OK

    def output_tokens(self) -> Optional[int]:
        """Generated answer tokens: the sum over generation stages."""
        counts = [
            t.output_tokens
            for t in self.traces
            if t.kind == StageKind.LLM_INFERENCE.value and t.output_tokens is not None
        ]
        if not counts:
            return None
        return sum(counts)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "pipeline": self.pipeline,
            "timestamp": self.timestamp.isoformat(),
            "run_window": self.run_window,
            "origin": self.origin,
            "status": self.status,
            "answer": self.answer,
            "traces": [trace.to_dict() for trace in self.traces],
            "energy": self.energy.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        try:
            return cls(
                question_id=data["question_id"],
                pipeline=data["pipeline"],
                timestamp=datetime.fromisoformat(data["timestamp"]),
                run_window=data["run_window"],
                origin=data.get("origin", ""),
                traces=[StageTrace.from_dict(t) for t in data["traces"]],
                answer=data.get("answer", ""),
                energy=EnergyBreakdown.from_dict(data["energy"]),
            )
        except KeyError as exc:
            raise SchemaError(f"run record missing field {exc}") from exc


@dataclass
class StageOutcome:
    """What a driver reports back for one completed stage.

    duration_s None means "measure me": the executor falls back to its
    own monotonic clock readings around the run_stage call.  Synthetic
    and replay drivers always supply the duration.
    """

    text: Optional[str] = None
    input_tokens: Optional[int] = None
    output_tokens: Optional[int] = None
    duration_s: Optional[float] = None
    status: str = STATUS_OK
    detail: Optional[str] = None


class StageDriver(Protocol):
    def begin_query(self, spec: PipelineSpec, question) -> None: ...

    def run_stage(self, stage: StageSpec) -> StageOutcome: ...

    def validate(self, spec: PipelineSpec) -> None: ...

    def clock(self) -> float: ...

    def wall_now(self) -> datetime: ...


@dataclass
class DriverSet:
    """Everything execute_pipeline needs besides the spec and question."""

    driver: StageDriver
    profiles: ProfileRegistry = field(default_factory=ProfileRegistry.builtin)
    tokenizer: TokenizerSpec = field(default_factory=TokenizerSpec)

    def clock(self) -> float:
        return self.driver.clock()

    def wall_now(self) -> datetime:
        return self.driver.wall_now()


@dataclass(frozen=True)
class ClassificationResult:
    theme: str
    degraded: bool
    reply: object = None


def classify_query(
    query: str,
    llm,
    themes: Sequence[str],
    default_theme: Optional[str] = None,
) -> ClassificationResult:
    """Map a query onto one of the configured themes via an LLM call.

    A reply outside the theme list degrades to the default theme rather
    than failing the run; transport failures are stage errors.
    """
    themes = list(themes)
    if not themes:
        raise ConfigurationError("classification needs a non-empty theme list")
    default = default_theme if default_theme is not None else themes[0]
    if default not in themes:
        raise ConfigurationError(f"default theme {default!r} not in theme list")
    prompt = (
        "Classify the question into exactly one of these themes: "
        + ", ".join(themes)
        + ". Reply with the theme name only.\n\nQuestion: "
        + query
    )
    try:
        reply = llm.complete(prompt)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(
            f"classification call failed: {exc}", stage_kind=StageKind.CLASSIFICATION.value
        ) from exc
    text = (reply.text if hasattr(reply, "text") else str(reply)).strip()
    normalized = text.strip().strip(".").lower()
    for theme in themes:
        if normalized == theme.lower():
            return ClassificationResult(theme=theme, degraded=False, reply=reply)
    return ClassificationResult(theme=default, degraded=True, reply=reply)


def stage_energy_kwh(stage: StageSpec, duration_s: float, profiles: ProfileRegistry) -> float:
    """Bill a stage duration on its executor's power profile."""
    if stage.executor is Executor.CPU:
        return cpu_stage_energy_kwh(duration_s, profiles.cpu)
    return llm_stage_energy_kwh(duration_s, profiles.llm(stage.model_id))


def _validate_drivers(spec: PipelineSpec, drivers: DriverSet) -> None:
    for stage in spec.stages:
        if stage.executor is Executor.LLM:
            drivers.profiles.llm(stage.model_id)
    drivers.driver.validate(spec)


def execute_pipeline(
    spec: PipelineSpec,
    question,
    drivers: DriverSet,
    clock: Optional[Callable[[], float]] = None,
    *,
    run_window: str = "random",
    origin: str = "",
) -> RunRecord:
    """Run every stage in order, timing and billing each one.

    Stages run strictly sequentially; a failing stage is recorded with
    status "error" and zero energy, and the remaining stages are skipped.
    The record is returned, never half-built.
    """
    if clock is None:
        clock = drivers.clock
    _validate_drivers(spec, drivers)
    drivers.driver.begin_query(spec, question)
    timestamp = drivers.wall_now()
    run_start = clock()
    traces: List[StageTrace] = []
    answer = ""
    for stage in spec.stages:
        start = clock()
        try:
            outcome = drivers.driver.run_stage(stage)
        except StageError as exc:
            end = clock()
            traces.append(
                StageTrace(
                    kind=stage.kind.value,
                    executor=stage.executor.value,
                    model_id=stage.model_id,
                    start_offset_s=elapsed(run_start, start),
                    duration_s=elapsed(start, end),
                    input_tokens=None,
                    output_tokens=None,
                    status=STATUS_ERROR,
                    energy_kwh=0.0,
                    error=str(exc),
                )
            )
            break
        end = clock()
        duration = outcome.duration_s if outcome.duration_s is not None else elapsed(start, end)
        if outcome.status not in (STATUS_OK, STATUS_DEGRADED):
            raise SchemaError(f"driver returned invalid stage status {outcome.status!r}")
        traces.append(
            StageTrace(
                kind=stage.kind.value,
                executor=stage.executor.value,
                model_id=stage.model_id,
                start_offset_s=elapsed(run_start, start),
                duration_s=duration,
                input_tokens=outcome.input_tokens,
                output_tokens=outcome.output_tokens,
                status=outcome.status,
                energy_kwh=stage_energy_kwh(stage, duration, drivers.profiles),
                error=outcome.detail if outcome.status == STATUS_DEGRADED else None,
            )
        )
        if outcome.text is not None:
            answer = outcome.text
    energy = total_query_energy((trace.kind, trace.energy_kwh) for trace in traces)
    return RunRecord(
        question_id=getattr(question, "id", str(question)),
        pipeline=spec.name,
        timestamp=timestamp,
        run_window=run_window,
        origin=origin,
        traces=traces,
        answer=answer,
        energy=energy,
    )
