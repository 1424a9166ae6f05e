"""Aggregate statistics, quality indices, and report building.

Energy distributions are summarised with medians and mean absolute
deviations (about the median primarily; about the mean as a secondary
figure) because per-query energies are heavy-tailed.  Reports are pure
functions of their inputs: same records and annotations in, same bytes
out, which is what makes re-analysis reproducible.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from scipy import stats as scipy_stats

from .errors import (
    DatasetError,
    SchemaError,
    SchemaVersionError,
    StatisticsError,
)
from .pipeline import RunRecord, STATUS_DEGRADED, STATUS_ERROR, STATUS_OK

__all__ = [
    "REPORT_VERSION",
    "median",
    "mad",
    "mad_about_mean",
    "sample_sd",
    "stage_shares",
    "shares_from_means",
    "AssociationResult",
    "token_energy_association",
    "Statement",
    "AnnotationRecord",
    "load_annotations",
    "QualityIndices",
    "quality_indices",
    "QualitySummary",
    "PipelineReport",
    "AggregateReport",
    "build_report",
    "load_report",
    "write_report_json",
    "write_report_csv",
    "write_figures",
    "emit_report",
]

REPORT_VERSION = 1

STAGE_BUCKETS = ("retrieval", "inference", "hallucination")

PathLike = Union[str, Path]


# -- robust statistics -------------------------------------------------------


def median(values: Sequence[float]) -> float:
    """The middle value; for even counts, the mean of the two middles."""
    if not values:
        raise StatisticsError("median needs at least one value")
    return float(statistics.median(values))


def mad(values: Sequence[float]) -> float:
    """Mean absolute deviation about the median."""
    center = median(values)
    return float(statistics.fmean(abs(v - center) for v in values))


def mad_about_mean(values: Sequence[float]) -> float:
    """Mean absolute deviation about the mean (secondary convention)."""
    if not values:
        raise StatisticsError("mad needs at least one value")
    center = statistics.fmean(values)
    return float(statistics.fmean(abs(v - center) for v in values))


def sample_sd(values: Sequence[float]) -> float:
    """Sample standard deviation; a single observation has spread 0."""
    if not values:
        raise StatisticsError("sd needs at least one value")
    if len(values) == 1:
        return 0.0
    return float(statistics.stdev(values))


def shares_from_means(means: Mapping[str, float]) -> Dict[str, float]:
    """Stage means -> fraction of the summed mean each stage carries."""
    total = sum(means.values())
    if total <= 0.0:
        raise StatisticsError("stage shares are undefined: total mean energy is zero")
    return {name: value / total for name, value in means.items()}


def _successful(records: Sequence[RunRecord]) -> List[RunRecord]:
    return [r for r in records if r.status in (STATUS_OK, STATUS_DEGRADED)]


def stage_shares(records: Sequence[RunRecord]) -> Dict[str, float]:
    """Mean per-stage energy over mean total energy, per stage bucket.

    Failed runs are excluded; they carry no meaningful energy.
    """
    kept = _successful(records)
    if not kept:
        raise StatisticsError("stage shares need at least one successful record")
    means = {
        "retrieval": statistics.fmean(r.energy.retrieval_kwh for r in kept),
        "inference": statistics.fmean(r.energy.inference_kwh for r in kept),
        "hallucination": statistics.fmean(r.energy.hallucination_kwh for r in kept),
    }
    return shares_from_means(means)


# -- correlation -------------------------------------------------------------


@dataclass(frozen=True)
class AssociationResult:
    """Token-count vs energy association, or the reason it is undefined."""

    n: int
    pearson_r: Optional[float] = None
    pearson_p: Optional[float] = None
    spearman_rho: Optional[float] = None
    spearman_p: Optional[float] = None
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "pearson_r": self.pearson_r,
            "pearson_p": self.pearson_p,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "reason": self.reason,
        }


def token_energy_association(records: Sequence[RunRecord]) -> AssociationResult:
    """Pearson (primary) and Spearman (secondary) correlation between
    generated tokens and total energy over the successful records."""
    pairs: List[Tuple[float, float]] = []
    for record in _successful(records):
        tokens = record.output_tokens()
        if tokens is not None:
            pairs.append((float(tokens), record.energy.total_kwh))
    n = len(pairs)
    if n < 3:
        return AssociationResult(n=n, reason=f"needs at least 3 paired records, got {n}")
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    if len(set(xs)) == 1:
        return AssociationResult(n=n, reason="token counts have no variance")
    if len(set(ys)) == 1:
        return AssociationResult(n=n, reason="energy values have no variance")
    pearson = scipy_stats.pearsonr(xs, ys)
    spearman = scipy_stats.spearmanr(xs, ys)
    return AssociationResult(
        n=n,
        pearson_r=float(pearson.statistic),
        pearson_p=float(pearson.pvalue),
        spearman_rho=float(spearman.statistic),
        spearman_p=float(spearman.pvalue),
    )


# -- annotations and quality indices ----------------------------------------


@dataclass(frozen=True)
class Statement:
    """One annotated statement of an answer.

    Factual claims carry a correctness judgement; other statements must
    not.  has_source records whether the statement is grounded in any
    retrieved source.
    """

    is_factual_claim: bool
    has_source: bool
    is_correct: Optional[bool] = None
    text: str = ""

    def __post_init__(self) -> None:
        if self.is_factual_claim and self.is_correct is None:
            raise DatasetError("factual claims need an is_correct judgement")
        if not self.is_factual_claim and self.is_correct is not None:
            raise DatasetError("only factual claims may carry is_correct")


@dataclass(frozen=True)
class AnnotationRecord:
    """All annotated statements of one (question, pipeline) answer."""

    question_id: str
    pipeline: str
    statements: Tuple[Statement, ...]
    excluded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "statements", tuple(self.statements))
        if not self.excluded and not self.statements:
            raise DatasetError(
                f"annotation for {self.pipeline}/{self.question_id} has no statements"
            )


@dataclass(frozen=True)
class QualityIndices:
    """Per-answer quality: factual accuracy and embellishment share."""

    factual_accuracy: Optional[float]
    embellishment_share: float
    n_statements: int
    n_factual: int


def quality_indices(statements: Sequence[Statement]) -> QualityIndices:
    """Factual accuracy = correct factual claims / factual claims (None
    when the answer makes no factual claim); embellishment share =
    unsourced statements / all statements."""
    if not statements:
        raise DatasetError("quality indices need at least one statement")
    factual = [s for s in statements if s.is_factual_claim]
    accuracy = None
    if factual:
        accuracy = sum(1 for s in factual if s.is_correct) / len(factual)
    unsourced = sum(1 for s in statements if not s.has_source)
    return QualityIndices(
        factual_accuracy=accuracy,
        embellishment_share=unsourced / len(statements),
        n_statements=len(statements),
        n_factual=len(factual),
    )


def _parse_bool(value, where: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
    raise DatasetError(f"{where}: cannot read boolean from {value!r}")


def _statement_from_dict(data: dict, where: str) -> Statement:
    try:
        is_factual = _parse_bool(data["is_factual_claim"], where)
        has_source = _parse_bool(data["has_source"], where)
    except KeyError as exc:
        raise DatasetError(f"{where}: statement missing field {exc}") from exc
    raw_correct = data.get("is_correct")
    if isinstance(raw_correct, str) and not raw_correct.strip():
        raw_correct = None
    is_correct = None if raw_correct is None else _parse_bool(raw_correct, where)
    try:
        return Statement(
            is_factual_claim=is_factual,
            has_source=has_source,
            is_correct=is_correct,
            text=data.get("text", ""),
        )
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from exc


def load_annotations(path: PathLike) -> List[AnnotationRecord]:
    """Loads annotations from nested JSON or flat CSV.

    JSON: a list of {question_id, pipeline, excluded?, statements: [...]}.
    CSV: one row per statement with question_id,pipeline columns; rows
    group by (question_id, pipeline) in file order.
    """
    source = Path(path)
    if not source.exists():
        raise DatasetError(f"annotation file not found: {source}")
    records: List[AnnotationRecord] = []
    if source.suffix.lower() == ".json":
        try:
            rows = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{source}: not valid JSON ({exc})") from exc
        if not isinstance(rows, list):
            raise DatasetError(f"{source}: expected a JSON list of annotations")
        for i, row in enumerate(rows, start=1):
            where = f"{source}:item {i}"
            try:
                statements = tuple(
                    _statement_from_dict(s, where) for s in row.get("statements", ())
                )
                records.append(
                    AnnotationRecord(
                        question_id=row["question_id"],
                        pipeline=row["pipeline"],
                        statements=statements,
                        excluded=bool(row.get("excluded", False)),
                    )
                )
            except KeyError as exc:
                raise DatasetError(f"{where}: annotation missing field {exc}") from exc
    else:
        grouped: Dict[Tuple[str, str], dict] = {}
        order: List[Tuple[str, str]] = []
        with open(source, newline="", encoding="utf-8") as handle:
            for i, row in enumerate(csv.DictReader(handle), start=2):
                where = f"{source}:line {i}"
                try:
                    key = (row["question_id"], row["pipeline"])
                except KeyError as exc:
                    raise DatasetError(f"{where}: missing field {exc}") from exc
                if key not in grouped:
                    grouped[key] = {"statements": [], "excluded": False}
                    order.append(key)
                excluded_raw = row.get("excluded")
                if excluded_raw and _parse_bool(excluded_raw, where):
                    grouped[key]["excluded"] = True
                    continue
                grouped[key]["statements"].append(_statement_from_dict(row, where))
        for key in order:
            entry = grouped[key]
            records.append(
                AnnotationRecord(
                    question_id=key[0],
                    pipeline=key[1],
                    statements=tuple(entry["statements"]),
                    excluded=entry["excluded"],
                )
            )
    return records


@dataclass(frozen=True)
class QualitySummary:
    """Pipeline-level aggregation of per-answer quality indices."""

    n_answers: int
    factual_accuracy_mean: Optional[float]
    factual_accuracy_sd: Optional[float]
    embellishment_mean: float
    embellishment_sd: float

    def to_dict(self) -> dict:
        return {
            "n_answers": self.n_answers,
            "factual_accuracy_mean": self.factual_accuracy_mean,
            "factual_accuracy_sd": self.factual_accuracy_sd,
            "embellishment_mean": self.embellishment_mean,
            "embellishment_sd": self.embellishment_sd,
        }


def summarise_quality(annotations: Sequence[AnnotationRecord]) -> Optional[QualitySummary]:
    kept = [a for a in annotations if not a.excluded]
    if not kept:
        return None
    indices = [quality_indices(a.statements) for a in kept]
    accuracies = [q.factual_accuracy for q in indices if q.factual_accuracy is not None]
    embellishments = [q.embellishment_share for q in indices]
    return QualitySummary(
        n_answers=len(kept),
        factual_accuracy_mean=statistics.fmean(accuracies) if accuracies else None,
        factual_accuracy_sd=sample_sd(accuracies) if accuracies else None,
        embellishment_mean=statistics.fmean(embellishments),
        embellishment_sd=sample_sd(embellishments),
    )


# -- the aggregate report ----------------------------------------------------


@dataclass
class PipelineReport:
    """Everything the report stores about one pipeline's runs."""

    pipeline: str
    n_total: int
    n_ok: int
    n_degraded: int
    n_error: int
    median_total_kwh: Optional[float]
    mean_total_kwh: Optional[float]
    mad_total_kwh: Optional[float]
    mad_about_mean_total_kwh: Optional[float]
    mean_stage_kwh: Dict[str, float] = field(default_factory=dict)
    stage_shares: Optional[Dict[str, float]] = None
    median_output_tokens: Optional[float] = None
    association: AssociationResult = field(default_factory=lambda: AssociationResult(n=0))
    quality: Optional[QualitySummary] = None

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "n_total": self.n_total,
            "n_ok": self.n_ok,
            "n_degraded": self.n_degraded,
            "n_error": self.n_error,
            "median_total_kwh": self.median_total_kwh,
            "mean_total_kwh": self.mean_total_kwh,
            "mad_total_kwh": self.mad_total_kwh,
            "mad_about_mean_total_kwh": self.mad_about_mean_total_kwh,
            "mean_stage_kwh": dict(self.mean_stage_kwh),
            "stage_shares": dict(self.stage_shares) if self.stage_shares else None,
            "median_output_tokens": self.median_output_tokens,
            "token_energy_association": self.association.to_dict(),
            "quality": self.quality.to_dict() if self.quality else None,
        }


@dataclass
class AggregateReport:
    """The full report over one run log: per-pipeline summaries."""

    pipelines: Dict[str, PipelineReport]
    n_records: int

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "n_records": self.n_records,
            "pipelines": {name: rep.to_dict() for name, rep in self.pipelines.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _pipeline_report(
    name: str,
    records: Sequence[RunRecord],
    annotations: Sequence[AnnotationRecord],
) -> PipelineReport:
    ok = [r for r in records if r.status == STATUS_OK]
    degraded = [r for r in records if r.status == STATUS_DEGRADED]
    errors = [r for r in records if r.status == STATUS_ERROR]
    kept = ok + degraded
    totals = [r.energy.total_kwh for r in kept]
    report = PipelineReport(
        pipeline=name,
        n_total=len(records),
        n_ok=len(ok),
        n_degraded=len(degraded),
        n_error=len(errors),
        median_total_kwh=median(totals) if totals else None,
        mean_total_kwh=statistics.fmean(totals) if totals else None,
        mad_total_kwh=mad(totals) if totals else None,
        mad_about_mean_total_kwh=mad_about_mean(totals) if totals else None,
    )
    if kept:
        report.mean_stage_kwh = {
            "retrieval": statistics.fmean(r.energy.retrieval_kwh for r in kept),
            "inference": statistics.fmean(r.energy.inference_kwh for r in kept),
            "hallucination": statistics.fmean(r.energy.hallucination_kwh for r in kept),
        }
        try:
            report.stage_shares = shares_from_means(report.mean_stage_kwh)
        except StatisticsError:
            report.stage_shares = None
        token_counts = [
            float(r.output_tokens()) for r in kept if r.output_tokens() is not None
        ]
        if token_counts:
            report.median_output_tokens = median(token_counts)
    report.association = token_energy_association(records)
    matching = [a for a in annotations if a.pipeline == name]
    report.quality = summarise_quality(matching)
    return report


def build_report(
    records: Sequence[RunRecord],
    annotations: Sequence[AnnotationRecord] = (),
) -> AggregateReport:
    """Aggregates a run log into per-pipeline summaries.

    Pure and deterministic: no timestamps, no environment reads.  Failed
    runs count toward n_error but are excluded from all aggregates.
    Pipelines absent from the records are absent from the report.
    """
    by_pipeline: Dict[str, List[RunRecord]] = {}
    for record in records:
        by_pipeline.setdefault(record.pipeline, []).append(record)
    reports = {
        name: _pipeline_report(name, group, annotations)
        for name, group in sorted(by_pipeline.items())
    }
    return AggregateReport(pipelines=reports, n_records=len(records))


def load_report(path: PathLike) -> dict:
    """Reads a report JSON back, refusing versions it cannot migrate."""
    source = Path(path)
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SchemaError(f"report not found: {source}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}: not valid JSON ({exc})") from exc
    version = data.get("report_version")
    if version != REPORT_VERSION:
        raise SchemaVersionError(found=version, expected=REPORT_VERSION)
    return data


# -- emission: json, csv, svg -------------------------------------------------

CSV_COLUMNS = [
    "pipeline",
    "n_total",
    "n_ok",
    "n_degraded",
    "n_error",
    "median_total_kwh",
    "mean_total_kwh",
    "mad_total_kwh",
    "mad_about_mean_total_kwh",
    "mean_retrieval_kwh",
    "mean_inference_kwh",
    "mean_hallucination_kwh",
    "share_retrieval",
    "share_inference",
    "share_hallucination",
    "median_output_tokens",
    "pearson_r",
    "spearman_rho",
    "factual_accuracy_mean",
    "embellishment_mean",
]


def write_report_json(report: AggregateReport, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(report.to_json() + "\n", encoding="utf-8")
    return target


def write_report_csv(report: AggregateReport, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for name in sorted(report.pipelines):
            rep = report.pipelines[name]
            shares = rep.stage_shares or {}
            quality = rep.quality
            row = {
                "pipeline": rep.pipeline,
                "n_total": rep.n_total,
                "n_ok": rep.n_ok,
                "n_degraded": rep.n_degraded,
                "n_error": rep.n_error,
                "median_total_kwh": rep.median_total_kwh,
                "mean_total_kwh": rep.mean_total_kwh,
                "mad_total_kwh": rep.mad_total_kwh,
                "mad_about_mean_total_kwh": rep.mad_about_mean_total_kwh,
                "mean_retrieval_kwh": rep.mean_stage_kwh.get("retrieval"),
                "mean_inference_kwh": rep.mean_stage_kwh.get("inference"),
                "mean_hallucination_kwh": rep.mean_stage_kwh.get("hallucination"),
                "share_retrieval": shares.get("retrieval"),
                "share_inference": shares.get("inference"),
                "share_hallucination": shares.get("hallucination"),
                "median_output_tokens": rep.median_output_tokens,
                "pearson_r": rep.association.pearson_r,
                "spearman_rho": rep.association.spearman_rho,
                "factual_accuracy_mean": quality.factual_accuracy_mean if quality else None,
                "embellishment_mean": quality.embellishment_mean if quality else None,
            }
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return target


def _figure_context():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ragwatt"
    return plt


def _save(fig, path: Path) -> Path:
    # Date=None keeps the SVG free of wall-clock metadata, so identical
    # inputs produce identical bytes.
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def write_figures(
    report: AggregateReport,
    records: Sequence[RunRecord],
    outdir: PathLike,
) -> List[Path]:
    """Renders the report's figures as deterministic SVGs.

    Always: median energy per pipeline, stage-share composition, and
    tokens-vs-energy scatter.  With annotations present in the report:
    quality bars and energy-vs-quality scatter.
    """
    plt = _figure_context()
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    names = sorted(report.pipelines)

    # 1. median energy per pipeline, with MAD bars
    fig, ax = plt.subplots(figsize=(6, 4))
    medians = [report.pipelines[n].median_total_kwh or 0.0 for n in names]
    mads = [report.pipelines[n].mad_total_kwh or 0.0 for n in names]
    ax.bar(names, medians, yerr=mads, capsize=4, color="#4878a8")
    ax.set_ylabel("median energy per query (kWh)")
    ax.set_title("Per-query energy by pipeline")
    fig.tight_layout()
    written.append(_save(fig, out / "energy_median.svg"))
    plt.close(fig)

    # 2. stage-share composition
    fig, ax = plt.subplots(figsize=(6, 4))
    bottoms = [0.0] * len(names)
    colors = {"retrieval": "#88aa66", "inference": "#4878a8", "hallucination": "#c08040"}
    for bucket in STAGE_BUCKETS:
        heights = []
        for n in names:
            shares = report.pipelines[n].stage_shares or {}
            heights.append(shares.get(bucket, 0.0))
        ax.bar(names, heights, bottom=bottoms, label=bucket, color=colors[bucket])
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_ylabel("share of mean energy")
    ax.set_title("Energy composition by stage")
    ax.legend()
    fig.tight_layout()
    written.append(_save(fig, out / "stage_shares.svg"))
    plt.close(fig)

    # 3. tokens vs energy scatter over successful records
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names:
        xs, ys = [], []
        for record in records:
            if record.pipeline != name or record.status == STATUS_ERROR:
                continue
            tokens = record.output_tokens()
            if tokens is None:
                continue
            xs.append(tokens)
            ys.append(record.energy.total_kwh)
        if xs:
            ax.scatter(xs, ys, label=name, s=14, alpha=0.7)
    ax.set_xlabel("generated tokens")
    ax.set_ylabel("energy per query (kWh)")
    ax.set_title("Token count vs energy")
    if ax.has_data():
        ax.legend()
    fig.tight_layout()
    written.append(_save(fig, out / "tokens_vs_energy.svg"))
    plt.close(fig)

    annotated = [n for n in names if report.pipelines[n].quality is not None]
    if annotated:
        # 4. quality indices per pipeline
        fig, ax = plt.subplots(figsize=(6, 4))
        width = 0.38
        xs = range(len(annotated))
        accuracy = [
            report.pipelines[n].quality.factual_accuracy_mean or 0.0 for n in annotated
        ]
        embellishment = [
            report.pipelines[n].quality.embellishment_mean for n in annotated
        ]
        ax.bar([x - width / 2 for x in xs], accuracy, width, label="factual accuracy")
        ax.bar(
            [x + width / 2 for x in xs], embellishment, width, label="embellishment share"
        )
        ax.set_xticks(list(xs))
        ax.set_xticklabels(annotated)
        ax.set_ylim(0, 1)
        ax.set_title("Answer quality by pipeline")
        ax.legend()
        fig.tight_layout()
        written.append(_save(fig, out / "quality.svg"))
        plt.close(fig)

        # 5. energy vs quality
        fig, ax = plt.subplots(figsize=(6, 4))
        for name in annotated:
            rep = report.pipelines[name]
            if rep.median_total_kwh is None:
                continue
            quality = rep.quality.factual_accuracy_mean
            if quality is None:
                continue
            ax.scatter([rep.median_total_kwh], [quality], s=48)
            ax.annotate(name, (rep.median_total_kwh, quality), xytext=(4, 4),
                        textcoords="offset points")
        ax.set_xlabel("median energy per query (kWh)")
        ax.set_ylabel("mean factual accuracy")
        ax.set_title("Energy vs answer quality")
        fig.tight_layout()
        written.append(_save(fig, out / "energy_vs_quality.svg"))
        plt.close(fig)

    return written


def emit_report(
    report: AggregateReport,
    records: Sequence[RunRecord],
    outdir: PathLike,
    formats: Sequence[str] = ("json", "csv", "svg"),
) -> Dict[str, List[Path]]:
    """Writes the requested output formats under outdir."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: Dict[str, List[Path]] = {}
    for fmt in formats:
        if fmt == "json":
            written["json"] = [write_report_json(report, out / "report.json")]
        elif fmt == "csv":
            written["csv"] = [write_report_csv(report, out / "report.csv")]
        elif fmt == "svg":
            written["svg"] = write_figures(report, records, out / "figures")
        else:
            raise SchemaError(f"unknown report format {fmt!r}; expected json, csv, svg")
    return written
