"""Live, synthetic, and replay drivers."""

import numpy as np
import pytest

from conftest import (
    FakeResponse,
    FakeTransport,
    MapEmbedder,
    Question,
    ScriptedDriver,
    chat_payload,
)

from ragwatt.drivers import (
    ChatCompletionsClient,
    Distribution,
    LiveDriver,
    RemoteEmbedder,
    ReplayDriver,
    SyntheticDriver,
)
from ragwatt.errors import ConfigurationError, SchemaError, StageError
from ragwatt.grounding import Chunk
from ragwatt.pipeline import (
    DriverSet,
    StageOutcome,
    builtin_pipeline,
    execute_pipeline,
)
from ragwatt.store import VectorStore

QUESTION = Question(id="q1", text="When is the target year?")


def make_client(responses, **kwargs):
    transport = FakeTransport(responses)
    kwargs.setdefault("backoff_s", 0.0)
    client = ChatCompletionsClient(
        "http://fake.test/v1", model="gpt-4o-mini", transport=transport, **kwargs
    )
    return client, transport


class TestChatCompletionsClient:
    def test_successful_call_returns_text_and_usage(self):
        client, transport = make_client(
            [FakeResponse(200, chat_payload("hello", prompt_tokens=9, completion_tokens=3))]
        )
        reply = client.complete("hi")
        assert reply.text == "hello"
        assert reply.input_tokens == 9
        assert reply.output_tokens == 3
        assert reply.duration_s >= 0.0
        assert len(transport.calls) == 1

    def test_temperature_is_always_zero(self):
        client, transport = make_client([FakeResponse(200, chat_payload("x"))])
        client.complete("hi")
        assert transport.calls[0]["json"]["temperature"] == 0.0

    def test_max_tokens_forwarded(self):
        client, transport = make_client([FakeResponse(200, chat_payload("x"))])
        client.complete("hi", max_tokens=300)
        assert transport.calls[0]["json"]["max_tokens"] == 300

    def test_model_override_per_call(self):
        client, transport = make_client([FakeResponse(200, chat_payload("x"))])
        client.complete("hi", model="gpt-4o")
        assert transport.calls[0]["json"]["model"] == "gpt-4o"

    def test_system_message_precedes_user(self):
        client, transport = make_client([FakeResponse(200, chat_payload("x"))])
        client.complete("hi", system="be brief")
        messages = transport.calls[0]["json"]["messages"]
        assert [m["role"] for m in messages] == ["system", "user"]

    def test_api_key_header_from_environment(self, monkeypatch):
        monkeypatch.setenv("RAGWATT_API_KEY", "sk-test")
        client, transport = make_client([FakeResponse(200, chat_payload("x"))])
        client.complete("hi")
        assert transport.calls[0]["headers"]["Authorization"] == "Bearer sk-test"

    def test_server_error_is_retried(self):
        client, transport = make_client(
            [FakeResponse(500), FakeResponse(200, chat_payload("recovered"))]
        )
        reply = client.complete("hi")
        assert reply.text == "recovered"
        assert len(transport.calls) == 2

    def test_rate_limit_is_retried(self):
        client, transport = make_client(
            [FakeResponse(429), FakeResponse(200, chat_payload("ok"))]
        )
        assert client.complete("hi").text == "ok"
        assert len(transport.calls) == 2

    def test_transport_error_is_retried(self):
        client, transport = make_client(
            [ConnectionError("refused"), FakeResponse(200, chat_payload("ok"))]
        )
        assert client.complete("hi").text == "ok"
        assert len(transport.calls) == 2

    def test_gives_up_after_max_retries(self):
        client, transport = make_client([FakeResponse(500)] * 3)
        with pytest.raises(StageError, match="3 attempts"):
            client.complete("hi")
        assert len(transport.calls) == 3

    def test_client_errors_are_not_retried(self):
        client, transport = make_client([FakeResponse(401)])
        with pytest.raises(StageError, match="401"):
            client.complete("hi")
        assert len(transport.calls) == 1

    def test_malformed_success_body_is_discarded_not_retried(self):
        client, transport = make_client(
            [FakeResponse(200, payload=None, text="<html>oops</html>")]
        )
        with pytest.raises(StageError, match="discarded"):
            client.complete("hi")
        assert len(transport.calls) == 1

    def test_deadline_bounds_the_whole_stage(self):
        client, transport = make_client([FakeResponse(500)] * 3, deadline_s=0.0)
        with pytest.raises(StageError):
            client.complete("hi")
        assert len(transport.calls) == 0

    def test_duration_excludes_failed_attempts(self):
        class SlowFailTransport(FakeTransport):
            def post(self, url, json=None, headers=None, timeout=None):
                import time as t

                if not self.calls:
                    self.calls.append("fail")
                    t.sleep(0.05)
                    raise ConnectionError("first attempt dies slowly")
                self.calls.append("ok")
                return FakeResponse(200, chat_payload("done"))

        client = ChatCompletionsClient(
            "http://fake.test/v1",
            model="gpt-4o-mini",
            transport=SlowFailTransport([]),
            backoff_s=0.0,
        )
        reply = client.complete("hi")
        assert reply.duration_s < 0.05  # the slow failed attempt is not billed


def live_fixture(responses, pipeline_name="cnz"):
    """A live driver over a two-chunk store with a deterministic embedder."""
    table = {
        "When is the target year?": [1.0, 0.0],
        "The target year is 2040.": [1.0, 0.0],
        "Policies vary.": [0.0, 1.0],
        "Bananas are tasty.": [0.0, -1.0],
    }
    embedder = MapEmbedder(table)
    store = VectorStore(embedder)
    store.add(Chunk(doc_id="pledges", text="The target year is 2040.", page=4))
    store.add(Chunk(doc_id="digest", text="Policies vary.", page=2))
    transport = FakeTransport(responses)
    chat = ChatCompletionsClient(
        "http://fake.test/v1", transport=transport, backoff_s=0.0
    )
    driver = LiveDriver(chat, store)
    return DriverSet(driver=driver), transport, builtin_pipeline(pipeline_name)


class TestLiveDriver:
    def test_cnz_run_retrieves_generates_and_filters(self):
        draft = "The target year is 2040. Bananas are tasty."
        drivers, transport, spec = live_fixture(
            [FakeResponse(200, chat_payload(draft, prompt_tokens=120, completion_tokens=18))]
        )
        record = execute_pipeline(spec, QUESTION, drivers)
        assert record.status == "ok"
        assert [t.kind for t in record.traces] == [
            "retrieval",
            "llm_inference",
            "hallucination_check",
        ]
        # the unsupported sentence is filtered out by the cosine check
        assert record.answer == "The target year is 2040."
        gen = record.traces[1]
        assert gen.input_tokens == 120
        assert gen.output_tokens == 18
        prompt = transport.calls[0]["json"]["messages"][-1]["content"]
        assert "When is the target year?" in prompt
        assert "The target year is 2040." in prompt  # retrieved context is cited

    def test_retrieval_feeds_highest_scoring_chunks_first(self):
        drivers, transport, spec = live_fixture(
            [FakeResponse(200, chat_payload("The target year is 2040."))]
        )
        execute_pipeline(spec, QUESTION, drivers)
        prompt = transport.calls[0]["json"]["messages"][-1]["content"]
        assert prompt.index("The target year is 2040.") < prompt.index("Policies vary.")

    def test_missing_usage_falls_back_to_tokenizer(self):
        drivers, transport, spec = live_fixture(
            [FakeResponse(200, chat_payload("The target year is 2040."))]
        )
        record = execute_pipeline(spec, QUESTION, drivers)
        gen = record.traces[1]
        assert gen.input_tokens > 0  # counted from the prompt text
        assert gen.output_tokens == 6  # ceil(24 chars / 4)

    def test_direct_capped_sends_token_limit(self):
        drivers, transport, _ = live_fixture(
            [FakeResponse(200, chat_payload("Short answer."))], pipeline_name="direct"
        )
        spec = builtin_pipeline("direct-capped")
        record = execute_pipeline(spec, QUESTION, drivers)
        assert transport.calls[0]["json"]["max_tokens"] == 300
        assert "at most 200 words" in transport.calls[0]["json"]["messages"][-1]["content"]
        assert record.status == "ok"

    def test_direct_sends_no_token_limit(self):
        drivers, transport, spec = live_fixture(
            [FakeResponse(200, chat_payload("Answer."))], pipeline_name="direct"
        )
        execute_pipeline(spec, QUESTION, drivers)
        assert "max_tokens" not in transport.calls[0]["json"]

    def test_ndc_threads_theme_from_classifier(self):
        draft = "The target year is 2040."
        drivers, transport, _ = live_fixture(
            [
                FakeResponse(200, chat_payload("pledges", 40, 2)),
                FakeResponse(200, chat_payload(draft, 150, 10)),
                FakeResponse(200, chat_payload("1:supported", 80, 5)),
            ]
        )
        spec = builtin_pipeline("ndc")
        record = execute_pipeline(spec, QUESTION, drivers)
        assert record.status == "ok"
        assert len(record.traces) == 4
        assert record.answer == "The target year is 2040."
        classifier_call = transport.calls[0]["json"]
        assert classifier_call["model"] == "gpt-4o"
        generation_prompt = transport.calls[1]["json"]["messages"][-1]["content"]
        assert "pledges" in generation_prompt
        verifier_prompt = transport.calls[2]["json"]["messages"][-1]["content"]
        assert "1." in verifier_prompt

    def test_unknown_theme_reply_degrades_not_fails(self):
        drivers, transport, _ = live_fixture(
            [
                FakeResponse(200, chat_payload("no idea, sorry", 40, 4)),
                FakeResponse(200, chat_payload("The target year is 2040.", 150, 10)),
                FakeResponse(200, chat_payload("1:supported", 80, 5)),
            ]
        )
        record = execute_pipeline(builtin_pipeline("ndc"), QUESTION, drivers)
        assert record.status == "degraded"
        assert record.traces[0].status == "degraded"
        assert record.traces[0].error is not None
        assert record.answer == "The target year is 2040."

    def test_unparseable_verifier_reply_degrades_with_unfiltered_answer(self):
        draft = "The target year is 2040. Bananas are tasty."
        drivers, transport, _ = live_fixture(
            [
                FakeResponse(200, chat_payload("pledges", 40, 2)),
                FakeResponse(200, chat_payload(draft, 150, 18)),
                FakeResponse(200, chat_payload("they all look fine to me", 80, 8)),
            ]
        )
        record = execute_pipeline(builtin_pipeline("ndc"), QUESTION, drivers)
        assert record.status == "degraded"
        check = record.traces[3]
        assert check.status == "degraded"
        assert record.answer == draft  # nothing silently dropped

    def test_transport_outage_becomes_an_error_record(self):
        drivers, transport, spec = live_fixture([ConnectionError("down")] * 3)
        record = execute_pipeline(spec, QUESTION, drivers)
        assert record.status == "error"
        assert [t.status for t in record.traces] == ["ok", "error"]
        assert record.traces[1].energy_kwh == 0.0
        assert record.energy.inference_kwh == 0.0

    def test_validate_requires_store_for_retrieval(self):
        chat = ChatCompletionsClient("http://fake.test/v1", transport=FakeTransport([]))
        driver = LiveDriver(chat, store=None)
        with pytest.raises(ConfigurationError, match="retrieval"):
            execute_pipeline(builtin_pipeline("cnz"), QUESTION, DriverSet(driver=driver))


class TestDistribution:
    def test_constant(self):
        rng = np.random.default_rng(0)
        assert Distribution.constant(3.5).sample(rng) == 3.5

    def test_uniform_bounds(self):
        rng = np.random.default_rng(0)
        dist = Distribution.uniform(1.0, 2.0)
        for _ in range(50):
            assert 1.0 <= dist.sample(rng) <= 2.0

    def test_uniform_rejects_bad_bounds(self):
        with pytest.raises(ConfigurationError):
            Distribution.uniform(2.0, 1.0)
        with pytest.raises(ConfigurationError):
            Distribution.uniform(-1.0, 1.0)

    def test_lognormal_is_positive(self):
        rng = np.random.default_rng(0)
        dist = Distribution.lognormal(0.0, 1.0)
        for _ in range(50):
            assert dist.sample(rng) > 0

    def test_from_dict(self):
        assert Distribution.from_dict({"dist": "constant", "value": 2}) == Distribution.constant(2)
        assert Distribution.from_dict(
            {"dist": "uniform", "low": 0, "high": 1}
        ) == Distribution.uniform(0, 1)
        with pytest.raises(ConfigurationError):
            Distribution.from_dict({"dist": "zipf"})


class TestSyntheticDriver:
    def test_requires_a_seed(self):
        with pytest.raises(ConfigurationError, match="seed"):
            SyntheticDriver(seed=None)

    def test_same_seed_same_records(self):
        spec = builtin_pipeline("ndc")
        records = []
        for _ in range(2):
            drivers = DriverSet(driver=SyntheticDriver(seed=42))
            records.append(execute_pipeline(spec, QUESTION, drivers).to_dict())
        assert records[0] == records[1]

    def test_different_seeds_differ(self):
        spec = builtin_pipeline("direct")
        a = execute_pipeline(spec, QUESTION, DriverSet(driver=SyntheticDriver(seed=1)))
        b = execute_pipeline(spec, QUESTION, DriverSet(driver=SyntheticDriver(seed=2)))
        assert a.to_dict() != b.to_dict()

    def test_output_cap_applies_to_synthetic_tokens(self):
        heavy = {"llm_inference": {"output_tokens": Distribution.constant(10_000)}}
        drivers = DriverSet(driver=SyntheticDriver(seed=3, distributions=heavy))
        record = execute_pipeline(builtin_pipeline("direct-capped"), QUESTION, drivers)
        assert record.output_tokens() == 300

    def test_uncapped_pipeline_keeps_drawn_tokens(self):
        heavy = {"llm_inference": {"output_tokens": Distribution.constant(10_000)}}
        drivers = DriverSet(driver=SyntheticDriver(seed=3, distributions=heavy))
        record = execute_pipeline(builtin_pipeline("direct"), QUESTION, drivers)
        assert record.output_tokens() == 10_000

    def test_clock_advances_across_queries(self):
        drivers = DriverSet(driver=SyntheticDriver(seed=9))
        spec = builtin_pipeline("direct")
        first = execute_pipeline(spec, QUESTION, drivers)
        second = execute_pipeline(spec, Question(id="q2", text="More?"), drivers)
        assert second.timestamp > first.timestamp

    def test_generated_answer_is_nonempty_text(self):
        drivers = DriverSet(driver=SyntheticDriver(seed=10))
        record = execute_pipeline(builtin_pipeline("direct"), QUESTION, drivers)
        assert record.answer
        assert record.answer.endswith(".")


class TestReplayDriver:
    def synthetic_record(self, name="ndc", seed=21):
        drivers = DriverSet(driver=SyntheticDriver(seed=seed))
        return execute_pipeline(
            builtin_pipeline(name), QUESTION, drivers, run_window="morning"
        )

    def test_replay_reproduces_the_record_exactly(self):
        original = self.synthetic_record()
        drivers = DriverSet(driver=ReplayDriver([original]))
        replayed = execute_pipeline(
            builtin_pipeline("ndc"), QUESTION, drivers, run_window="morning"
        )
        assert replayed.to_dict() == original.to_dict()

    def test_replay_consumes_records_in_order(self):
        drivers = DriverSet(driver=SyntheticDriver(seed=4))
        spec = builtin_pipeline("direct")
        first = execute_pipeline(spec, QUESTION, drivers)
        second = execute_pipeline(spec, QUESTION, drivers)
        replay = DriverSet(driver=ReplayDriver([first, second]))
        assert execute_pipeline(spec, QUESTION, replay).to_dict() == first.to_dict()
        assert execute_pipeline(spec, QUESTION, replay).to_dict() == second.to_dict()

    def test_exhausted_queue_is_a_configuration_error(self):
        original = self.synthetic_record(name="direct")
        drivers = DriverSet(driver=ReplayDriver([original]))
        spec = builtin_pipeline("direct")
        execute_pipeline(spec, QUESTION, drivers)
        with pytest.raises(ConfigurationError, match="q1"):
            execute_pipeline(spec, QUESTION, drivers)

    def test_missing_pipeline_is_a_configuration_error(self):
        original = self.synthetic_record(name="direct")
        drivers = DriverSet(driver=ReplayDriver([original]))
        with pytest.raises(ConfigurationError, match="cnz"):
            execute_pipeline(builtin_pipeline("cnz"), QUESTION, drivers)

    def test_stage_shape_mismatch_is_a_schema_error(self):
        original = self.synthetic_record(name="cnz")
        crooked = original.to_dict()
        crooked["pipeline"] = "direct"
        from ragwatt.pipeline import RunRecord

        drivers = DriverSet(driver=ReplayDriver([RunRecord.from_dict(crooked)]))
        with pytest.raises(SchemaError, match="retrieval"):
            execute_pipeline(builtin_pipeline("direct"), QUESTION, drivers)

    def test_error_records_replay_as_errors(self):
        failing = ScriptedDriver([("fail", 0.75, StageError("store offline"))])
        original = execute_pipeline(
            builtin_pipeline("cnz"), QUESTION, DriverSet(driver=failing)
        )
        drivers = DriverSet(driver=ReplayDriver([original]))
        replayed = execute_pipeline(builtin_pipeline("cnz"), QUESTION, drivers)
        assert replayed.status == "error"
        assert replayed.traces[0].duration_s == 0.75
        assert replayed.traces[0].energy_kwh == 0.0
        assert replayed.energy.total_kwh == 0.0


class TestRemoteEmbedder:
    def test_embeddings_sorted_by_index(self):
        transport = FakeTransport(
            [
                FakeResponse(
                    200,
                    {
                        "data": [
                            {"index": 1, "embedding": [0.0, 1.0]},
                            {"index": 0, "embedding": [1.0, 0.0]},
                        ]
                    },
                )
            ]
        )
        embedder = RemoteEmbedder("http://fake.test/v1", "embedder-1", transport=transport)
        vectors = embedder.embed(["a", "b"])
        assert np.allclose(vectors[0], [1.0, 0.0])
        assert np.allclose(vectors[1], [0.0, 1.0])
        assert transport.calls[0]["json"] == {"model": "embedder-1", "input": ["a", "b"]}

    def test_http_failure_is_a_stage_error(self):
        transport = FakeTransport([FakeResponse(503)])
        embedder = RemoteEmbedder("http://fake.test/v1", "embedder-1", transport=transport)
        with pytest.raises(StageError, match="503"):
            embedder.embed(["a"])

    def test_malformed_payload_is_a_stage_error(self):
        transport = FakeTransport([FakeResponse(200, {"surprise": True})])
        embedder = RemoteEmbedder("http://fake.test/v1", "embedder-1", transport=transport)
        with pytest.raises(StageError, match="malformed"):
            embedder.embed(["a"])
