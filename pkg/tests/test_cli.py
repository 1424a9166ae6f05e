"""Command line behaviour: outputs, files, and exit codes."""

import json

import pytest

from ragwatt.cli import main


def write_config(tmp_path, **overrides):
    data = {
        "config_version": 1,
        "pipelines": ["direct"],
        "log_path": str(tmp_path / "runs.jsonl"),
        "driver": "synthetic",
        "seed": 31,
        "limit": 3,
    }
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path, data


class TestEstimate:
    def test_mini_profile_hour(self, capsys):
        assert main(["estimate", "3600", "gpt4o-mini", "llm"]) == 0
        assert capsys.readouterr().out == "0.3843 kWh\n"

    def test_larger_profile_hour(self, capsys):
        assert main(["estimate", "3600", "gpt4o", "llm"]) == 0
        assert capsys.readouterr().out == "0.7924 kWh\n"

    def test_cpu_retrieval_hour(self, capsys):
        assert main(["estimate", "3600", "cpu", "retrieval"]) == 0
        assert capsys.readouterr().out == "0.009265 kWh\n"

    def test_cpu_verification_minute(self, capsys):
        assert main(["estimate", "60", "cpu", "hallucination-cpu"]) == 0
        assert capsys.readouterr().out == "0.0001544 kWh\n"

    def test_llm_verification_uses_llm_coefficient(self, capsys):
        assert main(["estimate", "3600", "gpt4o-mini", "hallucination-llm"]) == 0
        assert capsys.readouterr().out == "0.3843 kWh\n"

    def test_profile_spelling_is_forgiving(self, capsys):
        assert main(["estimate", "3600", "GPT-4o-Mini", "llm"]) == 0
        assert capsys.readouterr().out == "0.3843 kWh\n"

    def test_unknown_profile_lists_available(self, capsys):
        assert main(["estimate", "3600", "gpt-5", "llm"]) == 1
        err = capsys.readouterr().err
        assert "gpt-4o" in err
        assert "gpt-4o-mini" in err

    def test_unknown_mode_lists_modes(self, capsys):
        assert main(["estimate", "3600", "cpu", "warmup"]) == 1
        assert "retrieval" in capsys.readouterr().err

    def test_llm_profile_rejected_for_cpu_mode(self, capsys):
        assert main(["estimate", "3600", "gpt4o-mini", "retrieval"]) == 1

    def test_non_numeric_duration(self, capsys):
        assert main(["estimate", "soon", "cpu", "retrieval"]) == 1

    def test_negative_duration(self, capsys):
        assert main(["estimate", "-5", "cpu", "retrieval"]) == 1


class TestRun:
    def test_run_writes_log_and_summary(self, tmp_path, capsys):
        config, data = write_config(tmp_path)
        assert main(["run", "--config", str(config)]) == 0
        captured = capsys.readouterr()
        assert "3 ok" in captured.err or "ran 3 queries" in captured.err
        log_lines = (tmp_path / "runs.jsonl").read_text().strip().splitlines()
        assert len(log_lines) == 3

    def test_stdout_json_summary(self, tmp_path, capsys):
        config, _ = write_config(tmp_path)
        assert main(["run", "--config", str(config), "--stdout", "json"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["records"] == 3
        assert summary["ok"] + summary["degraded"] + summary["error"] == 3

    def test_same_seed_invocations_are_byte_identical(self, tmp_path, capsys):
        config_a, _ = write_config(tmp_path, log_path=str(tmp_path / "a.jsonl"))
        assert main(["run", "--config", str(config_a)]) == 0
        config_b, _ = write_config(tmp_path, log_path=str(tmp_path / "b.jsonl"))
        assert main(["run", "--config", str(config_b)]) == 0
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_override_changes_the_log(self, tmp_path, capsys):
        config_a, _ = write_config(tmp_path, log_path=str(tmp_path / "a.jsonl"))
        main(["run", "--config", str(config_a)])
        config_b, _ = write_config(tmp_path, log_path=str(tmp_path / "b.jsonl"))
        main(["run", "--config", str(config_b), "--seed", "99"])
        assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "b.jsonl").read_bytes()

    def test_log_override(self, tmp_path, capsys):
        config, _ = write_config(tmp_path)
        override = tmp_path / "elsewhere.jsonl"
        assert main(["run", "--config", str(config), "--log", str(override)]) == 0
        assert override.exists()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "none.json")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_config_version_mismatch_names_versions(self, tmp_path, capsys):
        config, _ = write_config(tmp_path, config_version=7)
        assert main(["run", "--config", str(config)]) == 1
        err = capsys.readouterr().err
        assert "7" in err
        assert "1" in err

    def test_synthetic_without_seed(self, tmp_path, capsys):
        config, _ = write_config(tmp_path, seed=None)
        assert main(["run", "--config", str(config)]) == 1
        assert "seed" in capsys.readouterr().err

    def test_unknown_pipeline_lists_options(self, tmp_path, capsys):
        config, _ = write_config(tmp_path, pipelines=["direct", "mega-rag"])
        assert main(["run", "--config", str(config)]) == 1
        err = capsys.readouterr().err
        assert "mega-rag" in err
        assert "cnz" in err

    def test_malformed_config_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["run", "--config", str(path)]) == 1


def make_log(tmp_path, capsys, n=5, seed=13):
    config, _ = write_config(tmp_path, limit=n, seed=seed, pipelines=["cnz"])
    assert main(["run", "--config", str(config)]) == 0
    capsys.readouterr()  # discard run output
    return tmp_path / "runs.jsonl"


def tamper(path, line_index, field_path, delta):
    lines = path.read_text().splitlines()
    payload = json.loads(lines[line_index])
    node = payload
    for key in field_path[:-1]:
        node = node[key]
    node[field_path[-1]] += delta
    lines[line_index] = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")


class TestReplay:
    def test_clean_log_verifies(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        assert main(["replay", str(log)]) == 0
        assert "verified" in capsys.readouterr().err

    def test_tampered_trace_energy_detected_and_named(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        tamper(log, 2, ("traces", 1, "energy_kwh"), 1e-9)
        assert main(["replay", str(log)]) == 1
        err = capsys.readouterr().err
        assert "line 3" in err
        assert "q003" in err  # bundled questions q001.. run in order
        assert "energy_kwh" in err

    def test_tampered_breakdown_detected_at_read(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        tamper(log, 1, ("energy", "total_kwh"), 1e-9)
        assert main(["replay", str(log)]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_stdout_json_reports_mismatches(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        tamper(log, 0, ("traces", 0, "energy_kwh"), 1e-9)
        assert main(["replay", str(log), "--stdout", "json"]) == 1
        out = json.loads(capsys.readouterr().out)
        assert out["records"] == 5
        assert len(out["mismatches"]) == 1
        assert out["mismatches"][0]["field"] == "traces[0].energy_kwh"

    def test_missing_log(self, tmp_path, capsys):
        assert main(["replay", str(tmp_path / "none.jsonl")]) == 1


class TestReport:
    def test_report_writes_all_formats(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        outdir = tmp_path / "out"
        assert main(["report", str(log), "--outdir", str(outdir)]) == 0
        assert (outdir / "report.json").exists()
        assert (outdir / "report.csv").exists()
        figures = sorted(p.name for p in (outdir / "figures").glob("*.svg"))
        assert figures == ["energy_median.svg", "stage_shares.svg", "tokens_vs_energy.svg"]

    def test_report_stdout_json(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        assert main(["report", str(log), "--stdout", "json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["report_version"] == 1
        assert "cnz" in report["pipelines"]
        assert report["pipelines"]["cnz"]["n_total"] == 5

    def test_report_format_selection(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        outdir = tmp_path / "jsononly"
        assert main(["report", str(log), "--outdir", str(outdir), "--formats", "json"]) == 0
        assert (outdir / "report.json").exists()
        assert not (outdir / "report.csv").exists()

    def test_report_unknown_format(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        assert main(["report", str(log), "--formats", "pdf"]) == 1

    def test_report_with_annotations(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        annotations = tmp_path / "ann.json"
        annotations.write_text(
            json.dumps(
                [
                    {
                        "question_id": "q001",
                        "pipeline": "cnz",
                        "statements": [
                            {"is_factual_claim": True, "has_source": True, "is_correct": True}
                        ],
                    }
                ]
            )
        )
        assert main(["report", str(log), "--stdout", "json",
                     "--annotations", str(annotations)]) == 0
        report = json.loads(capsys.readouterr().out)
        quality = report["pipelines"]["cnz"]["quality"]
        assert quality["n_answers"] == 1
        assert quality["factual_accuracy_mean"] == 1.0

    def test_report_on_tampered_log_fails_validation(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        tamper(log, 0, ("energy", "inference_kwh"), 1e-9)
        assert main(["report", str(log)]) == 1

    def test_default_outdir_derives_from_log(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        assert main(["report", str(log), "--formats", "json"]) == 0
        assert (tmp_path / "runs.jsonl.report" / "report.json").exists()

    def test_unsupported_stdout_format(self, tmp_path, capsys):
        log = make_log(tmp_path, capsys)
        assert main(["report", str(log), "--stdout", "yaml"]) == 1


class TestParser:
    def test_no_arguments_is_a_usage_error(self):
        with pytest.raises(SystemExit):
            main([])

    def test_unknown_command_is_a_usage_error(self):
        with pytest.raises(SystemExit):
            main(["meditate"])
