"""Infrastructure-aware power model for chatbot pipeline stages.

Energy for a stage is wall-clock duration times the effective electrical
power drawn on the serving infrastructure, prorated to the share of a
node that one model instance occupies:

    u_gpu     = G * D_gpu / (N * B)
    u_non_gpu = G * D_non_gpu / (N * B)
    P_eff     = (P_gpu * u_gpu + P_non_gpu * u_non_gpu) * PUE
    E_kwh     = (duration_s / 3600) * P_eff

where G is the number of accelerators serving one model instance, N the
accelerators per node, B the concurrent request batch size, D_* draw
fractions of rated power, and P_* the rated node power in kW.  CPU-only
stages use a flat per-core power draw instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Tuple, Union

from .errors import ConfigurationError, MeasurementError, SchemaError

__all__ = [
    "SECONDS_PER_HOUR",
    "StageKind",
    "HardwareProfile",
    "CpuProfile",
    "ThroughputEstimate",
    "EnergyBreakdown",
    "ProfileRegistry",
    "GPT_4O",
    "GPT_4O_MINI",
    "DEFAULT_CPU",
    "builtin_profiles",
    "utilization_fractions",
    "power_contributions_kw",
    "node_power_kw",
    "effective_power_kw",
    "llm_stage_energy_kwh",
    "llm_stage_energy_from_throughput",
    "cpu_stage_energy_kwh",
    "hallucination_stage_energy_kwh",
    "total_query_energy",
]

SECONDS_PER_HOUR = 3600.0


class StageKind(str, enum.Enum):
    """The stage vocabulary used for energy bucketing and pipeline specs."""

    CLASSIFICATION = "classification"
    RETRIEVAL = "retrieval"
    LLM_INFERENCE = "llm_inference"
    HALLUCINATION_CHECK = "hallucination_check"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


@dataclass(frozen=True)
class HardwareProfile:
    """Serving-infrastructure parameters for one hosted model.

    Attributes:
        model_id: registry identifier, e.g. "gpt-4o-mini".
        accelerators_per_model: accelerators serving one model instance (G).
        accelerators_per_node: accelerators installed per node (N).
        batch_size: concurrent requests sharing the instance (B).
        gpu_draw_fraction: accelerator draw as a fraction of rated power
            (D_gpu; may exceed 1 for short-burst draw above the rating).
        non_gpu_draw_fraction: host-side draw fraction (D_non_gpu).
        node_gpu_power_kw: rated accelerator power of a full node (kW).
        node_non_gpu_power_kw: rated host power of a full node (kW).
        pue: datacenter power usage effectiveness multiplier.
    """

    model_id: str
    accelerators_per_model: int
    accelerators_per_node: int
    batch_size: int
    gpu_draw_fraction: float
    non_gpu_draw_fraction: float
    node_gpu_power_kw: float
    node_non_gpu_power_kw: float
    pue: float = 1.12

    def __post_init__(self) -> None:
        _require(bool(self.model_id), "profile needs a non-empty model_id")
        _require(self.accelerators_per_model >= 1, "accelerators_per_model must be >= 1")
        _require(self.accelerators_per_node >= 1, "accelerators_per_node must be >= 1")
        _require(self.batch_size >= 1, "batch_size must be >= 1")
        _require(self.gpu_draw_fraction >= 0.0, "gpu_draw_fraction must be >= 0")
        _require(self.non_gpu_draw_fraction >= 0.0, "non_gpu_draw_fraction must be >= 0")
        _require(self.node_gpu_power_kw >= 0.0, "node_gpu_power_kw must be >= 0")
        _require(self.node_non_gpu_power_kw >= 0.0, "node_non_gpu_power_kw must be >= 0")
        _require(self.pue >= 1.0, "pue must be >= 1.0")


@dataclass(frozen=True)
class CpuProfile:
    """Flat per-core power draw for CPU-only stages (retrieval, cosine checks)."""

    core_power_kw: float = 0.0085
    pue: float = 1.09
    cores: int = 1

    def __post_init__(self) -> None:
        _require(self.core_power_kw >= 0.0, "core_power_kw must be >= 0")
        _require(self.pue >= 1.0, "pue must be >= 1.0")
        _require(self.cores >= 1, "cores must be >= 1")


@dataclass(frozen=True)
class ThroughputEstimate:
    """Duration expressed as output length over decode rate plus latency."""

    output_tokens: float
    tokens_per_second: float
    latency_s: float = 0.0

    def __post_init__(self) -> None:
        if self.output_tokens < 0:
            raise MeasurementError("output_tokens must be >= 0")
        if not self.tokens_per_second > 0:
            raise MeasurementError("tokens_per_second must be > 0")
        if self.latency_s < 0:
            raise MeasurementError("latency_s must be >= 0")

    def duration_s(self) -> float:
        return self.output_tokens / self.tokens_per_second + self.latency_s


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-query energy split by stage family, in kWh.

    Classification calls are billed under inference_kwh: they are LLM
    forward passes, not retrieval or verification work.
    """

    retrieval_kwh: float
    inference_kwh: float
    hallucination_kwh: float
    total_kwh: float

    def __post_init__(self) -> None:
        for name in ("retrieval_kwh", "inference_kwh", "hallucination_kwh"):
            if getattr(self, name) < 0:
                raise MeasurementError(f"{name} must be >= 0")
        expected = self.retrieval_kwh + self.inference_kwh + self.hallucination_kwh
        if self.total_kwh != expected:
            raise SchemaError(
                "total_kwh does not equal the sum of its components "
                f"({self.total_kwh!r} != {expected!r})"
            )

    @classmethod
    def from_components(
        cls, retrieval_kwh: float, inference_kwh: float, hallucination_kwh: float
    ) -> "EnergyBreakdown":
        total = retrieval_kwh + inference_kwh + hallucination_kwh
        return cls(retrieval_kwh, inference_kwh, hallucination_kwh, total)

    def to_dict(self) -> dict:
        return {
            "retrieval_kwh": self.retrieval_kwh,
            "inference_kwh": self.inference_kwh,
            "hallucination_kwh": self.hallucination_kwh,
            "total_kwh": self.total_kwh,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyBreakdown":
        try:
            return cls(
                retrieval_kwh=float(data["retrieval_kwh"]),
                inference_kwh=float(data["inference_kwh"]),
                hallucination_kwh=float(data["hallucination_kwh"]),
                total_kwh=float(data["total_kwh"]),
            )
        except KeyError as exc:
            raise SchemaError(f"energy breakdown missing field {exc}") from exc


# Built-in profiles for the two hosted model classes the experiments use.
# The large model runs on 8-accelerator nodes with one instance per node;
# the medium model shares a node between two instances at a higher draw
# fraction per accelerator.
GPT_4O = HardwareProfile(
    model_id="gpt-4o",
    accelerators_per_model=8,
    accelerators_per_node=8,
    batch_size=8,
    gpu_draw_fraction=0.6,
    non_gpu_draw_fraction=0.5,
    node_gpu_power_kw=5.6,
    node_non_gpu_power_kw=4.6,
    pue=1.12,
)

GPT_4O_MINI = HardwareProfile(
    model_id="gpt-4o-mini",
    accelerators_per_model=4,
    accelerators_per_node=8,
    batch_size=8,
    gpu_draw_fraction=1.2,
    non_gpu_draw_fraction=0.5,
    node_gpu_power_kw=3.2,
    node_non_gpu_power_kw=3.3,
    pue=1.12,
)

DEFAULT_CPU = CpuProfile()


def _normalize_id(model_id: str) -> str:
    return "".join(ch for ch in model_id.lower() if ch.isalnum())


class ProfileRegistry:
    """Lookup for hardware profiles by model id plus the CPU profile.

    Ids are matched case-insensitively ignoring separators, so
    "gpt4o-mini", "gpt-4o-mini" and "GPT_4O_MINI" resolve identically.
    """

    def __init__(
        self,
        hardware: Iterable[HardwareProfile] = (),
        cpu: CpuProfile = DEFAULT_CPU,
    ) -> None:
        self._profiles: dict[str, HardwareProfile] = {}
        self.cpu = cpu
        for profile in hardware:
            self.add(profile)

    def add(self, profile: HardwareProfile) -> None:
        self._profiles[_normalize_id(profile.model_id)] = profile

    def llm(self, model_id: str) -> HardwareProfile:
        key = _normalize_id(model_id or "")
        try:
            return self._profiles[key]
        except KeyError:
            raise ConfigurationError(
                f"unknown model profile {model_id!r}; available: {', '.join(self.available())}"
            ) from None

    def __contains__(self, model_id: str) -> bool:
        return _normalize_id(model_id or "") in self._profiles

    def available(self) -> list[str]:
        return sorted(p.model_id for p in self._profiles.values())

    @classmethod
    def builtin(cls) -> "ProfileRegistry":
        return cls(hardware=(GPT_4O, GPT_4O_MINI), cpu=DEFAULT_CPU)


def builtin_profiles() -> ProfileRegistry:
    """Registry with the stock gpt-4o / gpt-4o-mini profiles and default CPU."""
    return ProfileRegistry.builtin()


def utilization_fractions(profile: HardwareProfile) -> Tuple[float, float]:
    """Per-query share of node GPU and non-GPU capacity, (u_gpu, u_non_gpu)."""
    denominator = profile.accelerators_per_node * profile.batch_size
    u_gpu = profile.accelerators_per_model * profile.gpu_draw_fraction / denominator
    u_non_gpu = profile.accelerators_per_model * profile.non_gpu_draw_fraction / denominator
    return u_gpu, u_non_gpu


def power_contributions_kw(profile: HardwareProfile) -> Tuple[float, float]:
    """Prorated GPU and non-GPU power draw in kW, before the PUE multiplier."""
    u_gpu, u_non_gpu = utilization_fractions(profile)
    return profile.node_gpu_power_kw * u_gpu, profile.node_non_gpu_power_kw * u_non_gpu


def node_power_kw(profile: HardwareProfile) -> float:
    """Total prorated IT power in kW, before the PUE multiplier."""
    gpu_kw, non_gpu_kw = power_contributions_kw(profile)
    return gpu_kw + non_gpu_kw


def effective_power_kw(profile: HardwareProfile) -> float:
    """Facility-level power in kW attributable to one query slot."""
    return node_power_kw(profile) * profile.pue


def _check_duration(duration_s: float) -> None:
    if duration_s < 0:
        raise MeasurementError(f"duration must be >= 0, got {duration_s!r}")


def llm_stage_energy_kwh(duration_s: float, profile: HardwareProfile) -> float:
    """Energy of an LLM-executed stage over a measured wall-clock duration."""
    _check_duration(duration_s)
    return (duration_s / SECONDS_PER_HOUR) * effective_power_kw(profile)


def llm_stage_energy_from_throughput(
    estimate: ThroughputEstimate, profile: HardwareProfile
) -> float:
    """Energy with the duration reconstructed from decode throughput.

    Exactly equivalent to llm_stage_energy_kwh on the reconstructed
    duration; no separate arithmetic path.
    """
    return llm_stage_energy_kwh(estimate.duration_s(), profile)


def cpu_stage_energy_kwh(duration_s: float, cpu: CpuProfile = DEFAULT_CPU) -> float:
    """Energy of a CPU-executed stage (retrieval, cosine verification)."""
    _check_duration(duration_s)
    return (duration_s / SECONDS_PER_HOUR) * cpu.core_power_kw * cpu.cores * cpu.pue


def hallucination_stage_energy_kwh(
    duration_s: float,
    mode: str,
    cpu: CpuProfile = DEFAULT_CPU,
    llm_profile: Union[HardwareProfile, None] = None,
) -> float:
    """Energy of a verification stage, billed by how the check executes.

    mode "cpu_cosine" bills per-core CPU power; mode "llm_check" bills the
    verifying model's hardware profile.
    """
    if mode == "cpu_cosine":
        return cpu_stage_energy_kwh(duration_s, cpu)
    if mode == "llm_check":
        if llm_profile is None:
            raise ConfigurationError("llm_check mode needs a hardware profile")
        return llm_stage_energy_kwh(duration_s, llm_profile)
    raise SchemaError(f"unknown hallucination-check mode {mode!r}")


def total_query_energy(
    stage_energies: Iterable[Tuple[Union[str, StageKind], float]]
) -> EnergyBreakdown:
    """Fold per-stage energies into a per-query breakdown.

    Accepts (stage_kind, kwh) pairs in execution order; summation order is
    fixed by the input order so the result is reproducible bit for bit.
    """
    retrieval = 0.0
    inference = 0.0
    hallucination = 0.0
    for kind, kwh in stage_energies:
        try:
            kind = StageKind(kind)
        except ValueError:
            raise SchemaError(f"unknown stage kind {kind!r}") from None
        if kwh < 0:
            raise MeasurementError(f"stage energy must be >= 0, got {kwh!r}")
        if kind is StageKind.RETRIEVAL:
            retrieval += kwh
        elif kind is StageKind.HALLUCINATION_CHECK:
            hallucination += kwh
        else:
            inference += kwh
    return EnergyBreakdown.from_components(retrieval, inference, hallucination)
