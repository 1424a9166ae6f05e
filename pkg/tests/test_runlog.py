"""Run-log persistence and integrity verification."""

import json

import pytest

from conftest import Question

from ragwatt.drivers import SyntheticDriver
from ragwatt.errors import ConfigurationError, SchemaError, SchemaVersionError
from ragwatt.pipeline import DriverSet, builtin_pipeline, execute_pipeline
from ragwatt.runlog import (
    LogWriter,
    SCHEMA_VERSION,
    iter_raw,
    read_records,
    record_to_line,
    verify_log,
    write_records,
)


def synthetic_records(n=4, seed=17, pipeline="cnz"):
    drivers = DriverSet(driver=SyntheticDriver(seed=seed))
    spec = builtin_pipeline(pipeline)
    return [
        execute_pipeline(spec, Question(id=f"q{i:03d}", text=f"Question {i}?"), drivers)
        for i in range(n)
    ]


def mutate_line(path, line_index, mutate):
    lines = path.read_text().splitlines()
    payload = json.loads(lines[line_index])
    mutate(payload)
    lines[line_index] = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")


class TestRoundTrip:
    def test_written_records_read_back_identically(self, tmp_path):
        records = synthetic_records()
        path = tmp_path / "runs.jsonl"
        write_records(path, records)
        loaded = read_records(path)
        assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]

    def test_lines_carry_the_schema_version(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=1))
        payload = next(iter_raw(path))
        assert payload["schema"] == SCHEMA_VERSION

    def test_line_keys_are_sorted_for_stable_bytes(self):
        record = synthetic_records(n=1)[0]
        payload = json.loads(record_to_line(record))
        assert list(payload) == sorted(payload)

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=2))
        path.write_text(path.read_text().replace("\n", "\n\n", 1))
        assert len(read_records(path)) == 2

    def test_invalid_json_names_the_line(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=2))
        with open(path, "a") as handle:
            handle.write("{oops\n")
        with pytest.raises(SchemaError, match="3"):
            read_records(path)

    def test_schema_version_mismatch_is_reported(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=1))
        mutate_line(path, 0, lambda p: p.__setitem__("schema", 99))
        with pytest.raises(SchemaVersionError) as err:
            read_records(path)
        assert err.value.found == 99
        assert err.value.expected == SCHEMA_VERSION

    def test_missing_log_is_a_configuration_error(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_records(tmp_path / "absent.jsonl")


class TestLogWriter:
    def test_append_mode_preserves_existing_lines(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        first, second = synthetic_records(n=2)
        write_records(path, [first])
        write_records(path, [second], append=True)
        assert len(read_records(path)) == 2

    def test_overwrite_mode_replaces_the_log(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=3))
        write_records(path, synthetic_records(n=1, seed=5))
        assert len(read_records(path)) == 1

    def test_each_record_is_flushed_immediately(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        records = synthetic_records(n=2)
        with LogWriter(path, append=False) as writer:
            writer.write(records[0])
            assert len(read_records(path)) == 1
            writer.write(records[1])
            assert len(read_records(path)) == 2

    def test_unwritable_path_is_a_configuration_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ConfigurationError):
            LogWriter(blocker / "runs.jsonl")

    def test_writing_after_close_fails(self, tmp_path):
        writer = LogWriter(tmp_path / "runs.jsonl")
        writer.close()
        with pytest.raises(ConfigurationError):
            writer.write(synthetic_records(n=1)[0])


class TestVerifyLog:
    def test_clean_log_verifies_with_no_mismatches(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=6, pipeline="ndc"))
        assert verify_log(path) == []

    def test_error_records_verify_clean(self, tmp_path):
        from conftest import ScriptedDriver
        from ragwatt.errors import StageError

        failing = ScriptedDriver([("fail", 0.5, StageError("boom"))])
        record = execute_pipeline(
            builtin_pipeline("cnz"), Question(id="qf", text="?"), DriverSet(driver=failing)
        )
        path = tmp_path / "runs.jsonl"
        write_records(path, [record])
        assert verify_log(path) == []

    def test_single_mutated_trace_energy_is_found(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=5))

        def bump(payload):
            payload["traces"][1]["energy_kwh"] *= 1.000001

        mutate_line(path, 2, bump)
        mismatches = verify_log(path)
        assert len(mismatches) == 1
        found = mismatches[0]
        assert found.line == 3
        assert found.question_id == "q002"
        assert found.field == "traces[1].energy_kwh"
        assert "q002" in found.describe()

    def test_mutated_duration_breaks_trace_and_totals(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=3))

        def stretch(payload):
            payload["traces"][0]["duration_s"] += 10.0

        mutate_line(path, 1, stretch)
        mismatches = verify_log(path)
        fields = {m.field for m in mismatches}
        assert "traces[0].energy_kwh" in fields
        assert "energy.total_kwh" in fields
        assert all(m.line == 2 for m in mismatches)

    def test_inconsistent_breakdown_fails_at_read(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=3))

        def tamper(payload):
            payload["energy"]["total_kwh"] += 1e-6

        mutate_line(path, 2, tamper)
        with pytest.raises(SchemaError, match=":3:"):
            verify_log(path)

    def test_hundred_record_log_with_one_tampered_field(self, tmp_path):
        path = tmp_path / "runs.jsonl"
        write_records(path, synthetic_records(n=100, pipeline="ndc"))

        def bump(payload):
            payload["traces"][2]["energy_kwh"] += 1e-9

        mutate_line(path, 57, bump)
        mismatches = verify_log(path)
        assert len(mismatches) == 1
        assert mismatches[0].line == 58
        assert mismatches[0].field == "traces[2].energy_kwh"


class TestGoldenLog:
    """The committed golden log pins synthetic sampling, energy arithmetic
    and record serialisation all at once."""

    def test_bundled_golden_log_verifies_clean(self):
        from ragwatt.runlog import bundled_golden_log_path

        assert verify_log(bundled_golden_log_path()) == []

    def test_bundled_golden_log_reproduces_byte_for_byte(self, tmp_path):
        from ragwatt.experiment import ExperimentConfig, run_experiment
        from ragwatt.runlog import bundled_golden_log_path

        regen = tmp_path / "regen.jsonl"
        config = ExperimentConfig(
            pipelines=["direct", "direct-capped", "cnz", "ndc"],
            log_path=regen,
            driver="synthetic",
            seed=2024,
            windows=["morning"],
            repetitions=1,
            limit=3,
        )
        run_experiment(config)
        assert regen.read_bytes() == bundled_golden_log_path().read_bytes()
