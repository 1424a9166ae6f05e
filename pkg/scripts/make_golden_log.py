#!/usr/bin/env python3
"""Regenerates the bundled golden run log.

The golden log freezes the byte-exact output of a small seeded synthetic
campaign.  A regression test regenerates the same campaign in memory and
compares bytes, so any accidental change to synthetic sampling, energy
arithmetic, or record serialisation shows up as a diff against this
file.  Regenerate deliberately (and review the diff) when one of those
is changed on purpose:

    python3 scripts/make_golden_log.py
"""

from pathlib import Path

from ragwatt.experiment import ExperimentConfig, run_experiment

GOLDEN_SEED = 2024
GOLDEN_PATH = Path(__file__).resolve().parent.parent / "src" / "ragwatt" / "data" / "golden_runs.jsonl"


def golden_config(log_path) -> ExperimentConfig:
    return ExperimentConfig(
        pipelines=["direct", "direct-capped", "cnz", "ndc"],
        log_path=log_path,
        driver="synthetic",
        seed=GOLDEN_SEED,
        windows=["morning"],
        repetitions=1,
        limit=3,
    )


def main() -> None:
    summary = run_experiment(golden_config(GOLDEN_PATH))
    print(f"wrote {summary['records']} records to {GOLDEN_PATH}")


if __name__ == "__main__":
    main()
