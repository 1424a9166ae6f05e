"""Per-query energy accounting for retrieval-augmented chatbot pipelines.

The package models pipeline runs as ordered stages (classification,
retrieval, generation, hallucination checking), times each stage, and
bills the time against hardware power profiles to get kWh per query.
Experiments write append-only JSONL run logs; analysis turns logs into
aggregate reports; replay verifies that a log's energy accounting is
internally consistent, bit for bit.
"""

from .errors import (
    ConfigurationError,
    DatasetError,
    ExecutionError,
    MeasurementError,
    RagwattError,
    RetrievalError,
    SchemaError,
    SchemaVersionError,
    StageError,
    StatisticsError,
    UndefinedSimilarityError,
    ValidationError,
    VerificationFormatError,
)
from .power import (
    CpuProfile,
    EnergyBreakdown,
    GPT_4O,
    GPT_4O_MINI,
    HardwareProfile,
    ProfileRegistry,
    StageKind,
    ThroughputEstimate,
    builtin_profiles,
    cpu_stage_energy_kwh,
    effective_power_kw,
    llm_stage_energy_kwh,
    total_query_energy,
    utilization_fractions,
)
from .measurement import SimulatedClock, TokenCount, TokenizerSpec, count_tokens
from .grounding import (
    Chunk,
    HashEmbedder,
    SentenceVerdict,
    cosine_similarity,
    filter_response,
    llm_hallucination_check,
    segment_sentences,
)
from .store import VectorStore, load_corpus, retrieve
from .pipeline import (
    DriverSet,
    Executor,
    PipelineSpec,
    RunRecord,
    StageSpec,
    StageTrace,
    builtin_pipeline,
    builtin_pipelines,
    classify_query,
    execute_pipeline,
)
from .drivers import (
    ChatCompletionsClient,
    Distribution,
    LiveDriver,
    ReplayDriver,
    SyntheticDriver,
)
from .runlog import read_records, verify_log, write_records
from .experiment import (
    ExperimentConfig,
    QuestionItem,
    RunWindow,
    load_questions,
    run_experiment,
)
from .analysis import (
    AggregateReport,
    build_report,
    emit_report,
    load_annotations,
    mad,
    median,
    quality_indices,
    stage_shares,
    token_energy_association,
)

__version__ = "0.1.0"
