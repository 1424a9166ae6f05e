"""Stage drivers: live endpoint execution, seeded synthesis, and replay.

All three expose the same surface (begin_query / run_stage / validate /
clock / wall_now) so the pipeline executor cannot tell them apart.  The
live driver talks to an OpenAI-compatible chat endpoint and measures
real durations; the synthetic driver fabricates durations and token
counts from seeded distributions on a simulated clock; the replay driver
re-issues the stages of an existing run log without any network.
"""

from __future__ import annotations

import math
import os
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import requests

from .errors import ConfigurationError, SchemaError, StageError, VerificationFormatError
from .grounding import (
    DEFAULT_SUPPORT_THRESHOLD,
    filter_response,
    llm_hallucination_check,
)
from .measurement import SimulatedClock, TokenizerSpec, count_tokens, utc_now
from .pipeline import (
    DEFAULT_THEMES,
    DEFAULT_TOP_K,
    STATUS_DEGRADED,
    STATUS_OK,
    Executor,
    PipelineSpec,
    RunRecord,
    StageOutcome,
    StageSpec,
    classify_query,
)
from .power import StageKind
from .store import VectorStore, retrieve

__all__ = [
    "ChatReply",
    "ChatCompletionsClient",
    "RemoteEmbedder",
    "Distribution",
    "LiveDriver",
    "SyntheticDriver",
    "ReplayDriver",
]

DEFAULT_DEADLINE_S = 120.0
DEFAULT_MAX_RETRIES = 2
API_KEY_ENV = "RAGWATT_API_KEY"
EMBED_KEY_ENV = "RAGWATT_EMBED_API_KEY"


@dataclass
class ChatReply:
    """One completed chat call: text, usage, and the measured duration."""

    text: str
    input_tokens: Optional[int] = None
    output_tokens: Optional[int] = None
    duration_s: Optional[float] = None


class ChatCompletionsClient:
    """Minimal OpenAI-compatible chat-completions client.

    Retries transport failures and 5xx/429 up to max_retries times with
    exponential backoff, all under one per-stage deadline.  Failed
    attempts never produced tokens, so the reported duration covers only
    the successful attempt; a 200 response that cannot be parsed means
    tokens were produced but lost, so the call is discarded outright
    rather than retried.
    """

    def __init__(
        self,
        base_url: str,
        model: Optional[str] = None,
        *,
        api_key_env: str = API_KEY_ENV,
        deadline_s: float = DEFAULT_DEADLINE_S,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_s: float = 1.0,
        transport=None,
    ) -> None:
        if not base_url:
            raise ConfigurationError("chat client needs a base_url")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.deadline_s = deadline_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.transport = transport if transport is not None else requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(
        self,
        prompt: str,
        *,
        model: Optional[str] = None,
        system: Optional[str] = None,
        max_tokens: Optional[int] = None,
        temperature: float = 0.0,
    ) -> ChatReply:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        payload: dict = {
            "model": model or self.model,
            "messages": messages,
            "temperature": temperature,
        }
        if not payload["model"]:
            raise ConfigurationError("no model bound for chat call")
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens

        deadline = time.perf_counter() + self.deadline_s
        last_failure: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                break
            start = time.perf_counter()
            try:
                response = self.transport.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=remaining,
                )
            except Exception as exc:
                last_failure = f"transport error: {exc}"
                self._backoff(attempt, deadline)
                continue
            duration = time.perf_counter() - start
            if response.status_code == 429 or response.status_code >= 500:
                last_failure = f"HTTP {response.status_code}"
                self._backoff(attempt, deadline)
                continue
            if response.status_code != 200:
                raise StageError(
                    f"chat endpoint rejected the call: HTTP {response.status_code}"
                )
            try:
                data = response.json()
                text = data["choices"][0]["message"]["content"]
            except Exception as exc:
                # The endpoint did generate; we just cannot account for it.
                raise StageError(
                    f"malformed completion payload ({exc}); run discarded"
                ) from exc
            usage = data.get("usage") or {}
            return ChatReply(
                text=text if text is not None else "",
                input_tokens=usage.get("prompt_tokens"),
                output_tokens=usage.get("completion_tokens"),
                duration_s=duration,
            )
        raise StageError(
            f"chat endpoint unreachable after {self.max_retries + 1} attempts "
            f"({last_failure or 'deadline exceeded'})"
        )

    def _backoff(self, attempt: int, deadline: float) -> None:
        if attempt >= self.max_retries:
            return
        pause = self.backoff_s * (2**attempt)
        remaining = deadline - time.perf_counter()
        if remaining > 0:
            time.sleep(min(pause, remaining))


class RemoteEmbedder:
    """OpenAI-compatible /embeddings endpoint as an EmbeddingProvider."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = EMBED_KEY_ENV,
        timeout_s: float = 60.0,
        transport=None,
    ) -> None:
        if not base_url or not model:
            raise ConfigurationError("remote embedder needs base_url and model")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.transport = transport if transport is not None else requests.Session()

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env) or os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = self.transport.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout_s,
            )
        except Exception as exc:
            raise StageError(f"embedding endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise StageError(f"embedding endpoint returned HTTP {response.status_code}")
        try:
            rows = sorted(response.json()["data"], key=lambda item: item["index"])
            return [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except Exception as exc:
            raise StageError(f"malformed embedding payload: {exc}") from exc


@dataclass
class _BoundModel:
    """A chat client fixed to one model and call shape; remembers the reply."""

    client: ChatCompletionsClient
    model: str
    system: Optional[str] = None
    max_tokens: Optional[int] = None
    last_reply: Optional[ChatReply] = None

    def complete(self, prompt: str) -> ChatReply:
        reply = self.client.complete(
            prompt,
            model=self.model,
            system=self.system,
            max_tokens=self.max_tokens,
            temperature=0.0,
        )
        self.last_reply = reply
        return reply


GENERATION_SYSTEM_PROMPT = (
    "You are an assistant for climate-disclosure questions. Answer factually "
    "and concisely. When source excerpts are provided, use only information "
    "supported by them."
)


class LiveDriver:
    """Executes stages for real: retrieval, generation, verification.

    Carries the per-query state (retrieved chunks, draft answer) between
    stages of one query; begin_query resets it.
    """

    def __init__(
        self,
        chat: ChatCompletionsClient,
        store: Optional[VectorStore] = None,
        *,
        themes: Sequence[str] = DEFAULT_THEMES,
        default_theme: Optional[str] = None,
        tokenizer: Optional[TokenizerSpec] = None,
        system_prompt: str = GENERATION_SYSTEM_PROMPT,
    ) -> None:
        self.chat = chat
        self.store = store
        self.themes = list(themes)
        self.default_theme = default_theme
        self.tokenizer = tokenizer if tokenizer is not None else TokenizerSpec()
        self.system_prompt = system_prompt
        self._question = None
        self._spec: Optional[PipelineSpec] = None
        self._chunks: list = []
        self._answer: str = ""
        self._theme: Optional[str] = None

    # -- driver surface ----------------------------------------------------

    def clock(self) -> float:
        return time.perf_counter()

    def wall_now(self) -> datetime:
        return utc_now()

    def validate(self, spec: PipelineSpec) -> None:
        for stage in spec.stages:
            if stage.executor is Executor.LLM and self.chat is None:
                raise ConfigurationError("pipeline needs a chat client")
            if stage.kind is StageKind.RETRIEVAL and self.store is None:
                raise ConfigurationError(
                    f"pipeline {spec.name!r} has a retrieval stage but no store is configured"
                )
            if (
                stage.kind is StageKind.HALLUCINATION_CHECK
                and stage.executor is Executor.CPU
                and self.store is None
            ):
                raise ConfigurationError("cosine verification needs the store's embedder")
            if stage.kind is StageKind.CLASSIFICATION and not self.themes:
                raise ConfigurationError("classification stage needs a theme list")

    def begin_query(self, spec: PipelineSpec, question) -> None:
        self._spec = spec
        self._question = question
        self._chunks = []
        self._answer = ""
        self._theme = None

    def run_stage(self, stage: StageSpec) -> StageOutcome:
        if stage.kind is StageKind.CLASSIFICATION:
            return self._run_classification(stage)
        if stage.kind is StageKind.RETRIEVAL:
            return self._run_retrieval(stage)
        if stage.kind is StageKind.LLM_INFERENCE:
            return self._run_generation(stage)
        return self._run_verification(stage)

    # -- stage implementations ----------------------------------------------

    def _count(self, text: str) -> int:
        return count_tokens(text, self.tokenizer).count

    def _fill_counts(self, reply: ChatReply, prompt: str, system: Optional[str]) -> ChatReply:
        # counting happens here, after the timed call
        if reply.input_tokens is None:
            reply.input_tokens = self._count(((system + "\n") if system else "") + prompt)
        if reply.output_tokens is None:
            reply.output_tokens = self._count(reply.text)
        return reply

    def _run_classification(self, stage: StageSpec) -> StageOutcome:
        bound = _BoundModel(self.chat, stage.model_id)
        result = classify_query(
            self._question.text,
            bound,
            stage.params.get("themes", self.themes),
            default_theme=stage.params.get("default_theme", self.default_theme),
        )
        self._theme = result.theme
        reply = self._fill_counts(bound.last_reply, self._question.text, None)
        return StageOutcome(
            text=None,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            duration_s=reply.duration_s,
            status=STATUS_DEGRADED if result.degraded else STATUS_OK,
            detail=f"reply {reply.text!r} not a known theme" if result.degraded else None,
        )

    def _run_retrieval(self, stage: StageSpec) -> StageOutcome:
        top_k = int(stage.params.get("top_k", DEFAULT_TOP_K))
        self._chunks = retrieve(self._question.text, self.store, top_k)
        return StageOutcome()

    def _generation_prompt(self) -> str:
        parts = []
        if self._chunks:
            sources = "\n".join(
                f"[{i + 1}] ({chunk.ref()}) {chunk.text}" for i, chunk in enumerate(self._chunks)
            )
            parts.append("Source excerpts:\n" + sources)
        if self._theme:
            parts.append(f"Question theme: {self._theme}")
        constraint = self._spec.output_constraint_words if self._spec else None
        question_line = "Question: " + self._question.text
        if constraint:
            question_line += f"\nAnswer in at most {constraint} words."
        parts.append(question_line)
        return "\n\n".join(parts)

    def _run_generation(self, stage: StageSpec) -> StageOutcome:
        prompt = self._generation_prompt()
        max_tokens = self._spec.max_output_tokens() if self._spec else None
        bound = _BoundModel(self.chat, stage.model_id, self.system_prompt, max_tokens)
        reply = bound.complete(prompt)
        self._answer = reply.text
        reply = self._fill_counts(reply, prompt, self.system_prompt)
        return StageOutcome(
            text=reply.text,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            duration_s=reply.duration_s,
        )

    def _run_verification(self, stage: StageSpec) -> StageOutcome:
        if stage.executor is Executor.CPU:
            threshold = float(stage.params.get("threshold", DEFAULT_SUPPORT_THRESHOLD))
            kept, _verdicts = filter_response(
                self._answer, list(self._chunks), self.store.embedder, threshold=threshold
            )
            filtered = " ".join(kept)
            self._answer = filtered
            return StageOutcome(text=filtered)
        bound = _BoundModel(self.chat, stage.model_id)
        try:
            kept, _verdicts, prompt = llm_hallucination_check(
                self._answer, list(self._chunks), bound
            )
        except VerificationFormatError as exc:
            reply = bound.last_reply
            outcome = StageOutcome(
                text=self._answer,  # unverifiable, kept visibly un-filtered
                status=STATUS_DEGRADED,
                detail=str(exc),
            )
            if reply is not None:
                outcome.input_tokens = reply.input_tokens
                outcome.output_tokens = (
                    reply.output_tokens
                    if reply.output_tokens is not None
                    else self._count(reply.text)
                )
                outcome.duration_s = reply.duration_s
            return outcome
        filtered = " ".join(kept)
        self._answer = filtered
        if bound.last_reply is None:  # empty draft answer: no call was made
            return StageOutcome(text=filtered, input_tokens=0, output_tokens=0, duration_s=0.0)
        reply = self._fill_counts(bound.last_reply, prompt, None)
        return StageOutcome(
            text=filtered,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            duration_s=reply.duration_s,
        )


@dataclass(frozen=True)
class Distribution:
    """A sampling distribution for synthetic durations and token counts."""

    kind: str
    params: Tuple[float, ...]

    @classmethod
    def constant(cls, value: float) -> "Distribution":
        return cls("constant", (float(value),))

    @classmethod
    def uniform(cls, low: float, high: float) -> "Distribution":
        if low > high or low < 0:
            raise ConfigurationError("uniform distribution needs 0 <= low <= high")
        return cls("uniform", (float(low), float(high)))

    @classmethod
    def lognormal(cls, mean_log: float, sigma_log: float) -> "Distribution":
        if sigma_log < 0:
            raise ConfigurationError("lognormal sigma must be >= 0")
        return cls("lognormal", (float(mean_log), float(sigma_log)))

    @classmethod
    def from_dict(cls, data: dict) -> "Distribution":
        kind = data.get("dist")
        if kind == "constant":
            return cls.constant(data["value"])
        if kind == "uniform":
            return cls.uniform(data["low"], data["high"])
        if kind == "lognormal":
            return cls.lognormal(data["mean_log"], data["sigma_log"])
        raise ConfigurationError(f"unknown distribution {kind!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return float(rng.uniform(self.params[0], self.params[1]))
        return float(rng.lognormal(self.params[0], self.params[1]))


def _d(kind: str, executor: Optional[str] = None) -> str:
    return f"{kind}:{executor}" if executor else kind


DEFAULT_SYNTHETIC_DISTRIBUTIONS: Dict[str, Dict[str, Distribution]] = {
    "classification": {
        "duration_s": Distribution.lognormal(math.log(0.9), 0.25),
        "input_tokens": Distribution.constant(60),
        "output_tokens": Distribution.constant(2),
    },
    "retrieval": {
        "duration_s": Distribution.lognormal(math.log(0.12), 0.35),
    },
    "llm_inference": {
        "duration_s": Distribution.lognormal(math.log(4.0), 0.45),
        "input_tokens": Distribution.lognormal(math.log(350.0), 0.4),
        "output_tokens": Distribution.lognormal(math.log(230.0), 0.5),
    },
    "hallucination_check:cpu": {
        "duration_s": Distribution.lognormal(math.log(0.05), 0.3),
    },
    "hallucination_check:llm": {
        "duration_s": Distribution.lognormal(math.log(2.2), 0.4),
        "input_tokens": Distribution.lognormal(math.log(420.0), 0.3),
        "output_tokens": Distribution.constant(24),
    },
}

_FILLER_WORDS = (
    "emissions", "pledge", "target", "net", "zero", "carbon", "policy",
    "scope", "baseline", "reduction", "energy", "renewable", "offset",
    "disclosure", "pathway", "sector", "annual", "report", "verified",
)


class SyntheticDriver:
    """Fabricates stage outcomes from seeded distributions.

    Runs on a simulated clock that advances by each sampled duration, so
    identical seeds yield byte-identical run logs, timestamps included.
    """

    def __init__(
        self,
        seed: Optional[int],
        distributions: Optional[Dict[str, Dict[str, Distribution]]] = None,
        epoch: Optional[datetime] = None,
    ) -> None:
        if seed is None:
            raise ConfigurationError("synthetic driver requires a seed")
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.simulated = SimulatedClock(epoch)
        merged: Dict[str, Dict[str, Distribution]] = {
            key: dict(value) for key, value in DEFAULT_SYNTHETIC_DISTRIBUTIONS.items()
        }
        for key, overrides in (distributions or {}).items():
            merged.setdefault(key, {}).update(overrides)
        self.distributions = merged
        self._spec: Optional[PipelineSpec] = None

    def clock(self) -> float:
        return self.simulated.now()

    def wall_now(self) -> datetime:
        return self.simulated.wall_now()

    def jump_to(self, moment: datetime) -> None:
        self.simulated.jump_to(moment)

    def validate(self, spec: PipelineSpec) -> None:
        pass

    def begin_query(self, spec: PipelineSpec, question) -> None:
        self._spec = spec

    def _lookup(self, stage: StageSpec) -> Dict[str, Distribution]:
        specific = self.distributions.get(_d(stage.kind.value, stage.executor.value))
        if specific is not None:
            return specific
        generic = self.distributions.get(stage.kind.value)
        if generic is None:
            raise ConfigurationError(
                f"no synthetic distributions for stage kind {stage.kind.value!r}"
            )
        return generic

    def _words(self, n_tokens: int) -> str:
        n_words = max(1, round(n_tokens / 1.5))
        picks = self.rng.integers(0, len(_FILLER_WORDS), size=n_words)
        return " ".join(_FILLER_WORDS[i] for i in picks) + "."

    def run_stage(self, stage: StageSpec) -> StageOutcome:
        dists = self._lookup(stage)
        duration = float(dists["duration_s"].sample(self.rng))
        input_tokens = output_tokens = None
        text = None
        if "input_tokens" in dists:
            input_tokens = max(0, round(dists["input_tokens"].sample(self.rng)))
        if "output_tokens" in dists:
            output_tokens = max(0, round(dists["output_tokens"].sample(self.rng)))
        if stage.kind is StageKind.LLM_INFERENCE and output_tokens is not None:
            cap = self._spec.max_output_tokens() if self._spec else None
            if cap is not None:
                output_tokens = min(output_tokens, cap)
            text = self._words(output_tokens)
        self.simulated.advance(duration)
        return StageOutcome(
            text=text,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            duration_s=duration,
        )


class ReplayDriver:
    """Re-issues the stages of recorded runs, without any network.

    Records are consumed per (pipeline, question) key in log order.
    Durations, token counts, statuses and answers reproduce the log;
    inter-stage gaps are not reproduced, so start offsets are the
    cumulative stage durations.
    """

    def __init__(self, records: Sequence[RunRecord]) -> None:
        self._queues: Dict[Tuple[str, str], deque] = {}
        for record in records:
            key = (record.pipeline, record.question_id)
            self._queues.setdefault(key, deque()).append(record)
        self.simulated = SimulatedClock()
        self._record: Optional[RunRecord] = None
        self._cursor = 0

    @classmethod
    def from_log(cls, path) -> "ReplayDriver":
        from .runlog import read_records

        return cls(read_records(path))

    def clock(self) -> float:
        return self.simulated.now()

    def wall_now(self) -> datetime:
        return self.simulated.wall_now()

    def validate(self, spec: PipelineSpec) -> None:
        pass

    def begin_query(self, spec: PipelineSpec, question) -> None:
        key = (spec.name, getattr(question, "id", str(question)))
        queue = self._queues.get(key)
        if not queue:
            raise ConfigurationError(
                f"replay log has no remaining record for pipeline {key[0]!r} "
                f"question {key[1]!r}"
            )
        self._record = queue.popleft()
        self._cursor = 0
        self.simulated.jump_to(self._record.timestamp)

    def run_stage(self, stage: StageSpec) -> StageOutcome:
        record = self._record
        if record is None or self._cursor >= len(record.traces):
            raise SchemaError("replay ran past the recorded traces")
        trace = record.traces[self._cursor]
        self._cursor += 1
        if trace.kind != stage.kind.value:
            raise SchemaError(
                f"replay mismatch: log has {trace.kind!r} where spec has {stage.kind.value!r}"
            )
        self.simulated.advance(trace.duration_s)
        if trace.status == "error":
            raise StageError(trace.error or "replayed stage failure", stage_kind=trace.kind)
        is_last = self._cursor == len(record.traces)
        return StageOutcome(
            text=record.answer if is_last else None,
            input_tokens=trace.input_tokens,
            output_tokens=trace.output_tokens,
            duration_s=trace.duration_s,
            status=trace.status,
            detail=trace.error,
        )
