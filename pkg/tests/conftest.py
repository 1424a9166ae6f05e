"""Shared test doubles."""

from dataclasses import dataclass, field
from typing import List

import numpy as np


class MapEmbedder:
    """Embeds exact strings via a fixed lookup table."""

    def __init__(self, table):
        self.table = {key: np.asarray(value, dtype=np.float64) for key, value in table.items()}

    def embed(self, texts):
        return [self.table[text] for text in texts]


class FailingEmbedder:
    def embed(self, texts):
        raise RuntimeError("embedding backend unreachable")


@dataclass
class StubReply:
    text: str
    input_tokens: int = None
    output_tokens: int = None
    duration_s: float = None


class ScriptedLlm:
    """Returns canned replies in order and records every prompt."""

    def __init__(self, replies):
        self.replies = [r if isinstance(r, StubReply) else StubReply(r) for r in replies]
        self.calls: List[str] = []

    def complete(self, prompt, **kwargs):
        self.calls.append(prompt)
        if not self.replies:
            raise AssertionError("ScriptedLlm ran out of replies")
        return self.replies.pop(0)


@dataclass
class Question:
    id: str
    text: str


class ScriptedDriver:
    """Plays back pre-built stage outcomes on a simulated clock.

    Items may be StageOutcome instances, ("fail", duration_s, exception)
    triples that advance the clock then raise, or bare exceptions.
    """

    def __init__(self, outcomes, epoch=None):
        from ragwatt.measurement import SimulatedClock

        self.outcomes = list(outcomes)
        self.sim = SimulatedClock(epoch)
        self.begun = []
        self._cursor = 0

    def clock(self):
        return self.sim.now()

    def wall_now(self):
        return self.sim.wall_now()

    def validate(self, spec):
        pass

    def begin_query(self, spec, question):
        self.begun.append((spec.name, getattr(question, "id", None)))

    def run_stage(self, stage):
        item = self.outcomes[self._cursor]
        self._cursor += 1
        if isinstance(item, tuple) and item[0] == "fail":
            self.sim.advance(item[1])
            raise item[2]
        if isinstance(item, BaseException):
            raise item
        if item.duration_s is not None:
            self.sim.advance(item.duration_s)
        return item


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("body is not JSON")
        return self._payload


def chat_payload(text, prompt_tokens=None, completion_tokens=None):
    payload = {"choices": [{"message": {"content": text}}]}
    usage = {}
    if prompt_tokens is not None:
        usage["prompt_tokens"] = prompt_tokens
    if completion_tokens is not None:
        usage["completion_tokens"] = completion_tokens
    if usage:
        payload["usage"] = usage
    return payload


class FakeTransport:
    """Stands in for requests.Session; pops canned responses in order."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        if not self.responses:
            raise AssertionError("FakeTransport ran out of responses")
        item = self.responses.pop(0)
        if isinstance(item, BaseException):
            raise item
        return item
