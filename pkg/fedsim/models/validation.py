"""
Config Validation Models - Pydantic Schemas for Experiment and Sweep Files

Every file-based input of the CLI passes through one of these models before
anything is simulated, so a typo or an out-of-range value fails fast with a
field path instead of surfacing as a numerical error fifty rounds later.

Key Features:
- Nested sections (model, dataset, partition, training, aggregator, attack)
- Strict schemas: unknown keys are rejected
- YAML (default) or JSON (by file suffix) encodings
- Canonical digests for pairing attacked and no-attack runs
- Loss-free round-trip: parse -> to_yaml() -> parse yields an equal model

Models:
- ExperimentConfig: one federated training run
- SweepSpec: one swept axis over a base experiment

Validation Rules:
- rounds >= 10 (the accuracy metric averages the final 10% of rounds)
- malicious fraction in [0, 1), participation in (0, 1]
- degree of non-IID p in (0, 1]
- learning rate >= 0, batch size and local iterations >= 1
- sweep values nonempty and inside the swept axis's legal range
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fedsim.core.errors import ConfigurationError

# Constants for validation
MIN_ROUNDS = 10
AGGREGATOR_CHOICES = Literal[
    "fed-avg", "median", "trimmed-mean", "multi-krum", "clipped-clustering", "sign-guard",
    "fltrust", "flame", "foolsgold", "freqfed",
]
ATTACK_CHOICES = Literal[
    "none", "xfed-uv", "xfed-sgn", "lie", "fang-krum", "fang-trmean",
    "min-max", "min-sum", "mpaf", "poisonedfl",
]
SWEEP_AXES = Literal["malicious-fraction", "non-iid-p", "lambda", "omega", "root-bias", "participation"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    kind: Literal["logistic-regression", "mlp"] = Field("mlp", description="Model family")
    hidden: List[int] = Field(default_factory=lambda: [32], description="Hidden layer widths (mlp only)")

    @field_validator("hidden")
    @classmethod
    def validate_hidden(cls, v):
        if any(width < 1 for width in v):
            raise ValueError("hidden layer widths must be positive")
        return v

    @model_validator(mode="after")
    def check_hidden_for_kind(self):
        if self.kind == "mlp" and not self.hidden:
            raise ValueError("an mlp needs at least one hidden layer")
        return self


class DatasetSection(_Section):
    source: Literal["blobs", "csv", "idx"] = Field("blobs", description="Data source")
    samples: int = Field(2000, ge=2, description="Blob sample count n")
    num_classes: int = Field(10, ge=2, description="Class count L")
    dim: int = Field(20, ge=2, description="Blob feature dimension")
    spread: float = Field(0.5, gt=0, description="Blob within-class standard deviation")
    path: Optional[str] = Field(None, description="CSV file, or IDX image file")
    labels_path: Optional[str] = Field(None, description="IDX label file")
    test_fraction: float = Field(0.2, gt=0, lt=1, description="Held-out test share")

    @model_validator(mode="after")
    def check_paths(self):
        if self.source == "csv" and not self.path:
            raise ValueError("csv source needs 'path'")
        if self.source == "idx" and not (self.path and self.labels_path):
            raise ValueError("idx source needs 'path' and 'labels_path'")
        if self.source == "blobs" and self.samples < self.num_classes:
            raise ValueError("blobs need samples >= num_classes")
        return self


class PartitionSection(_Section):
    p: float = Field(0.5, gt=0, le=1, description="Degree of non-IID")
    allow_empty: bool = Field(False, description="Permit clients with no samples")


class TrainingSection(_Section):
    learning_rate: float = Field(0.3, ge=0, description="Local SGD step size")
    batch_size: int = Field(32, ge=1, description="Mini-batch size")
    local_iterations: int = Field(2, ge=1, description="Local SGD steps E per round")


class AggregatorSection(_Section):
    kind: AGGREGATOR_CHOICES = Field("fed-avg", description="Aggregation rule or defense")
    assumed_compromised: Optional[int] = Field(
        None, ge=0, description="Server's c; defaults to floor(m * participants)"
    )
    krum_select: Optional[int] = Field(None, ge=1, description="Multi-Krum f; defaults to k - c - 2")
    clip_threshold: Union[Literal["adaptive"], float] = Field(
        "adaptive", description="Clipped-Clustering tau, or 'adaptive' for the median norm"
    )
    sign_guard_norm_filter: bool = Field(True, description="SignGuard norm pre-filter")
    root_size: int = Field(100, ge=1, description="FLTrust root dataset size")
    root_bias: float = Field(0.1, ge=0, lt=1, description="FLTrust root bias probability")
    freq_cutoff: float = Field(0.25, gt=0, le=1, description="FreqFed low-frequency share")
    outlier_threshold: float = Field(3.5, gt=0, description="FLAME MAD threshold D")

    @field_validator("clip_threshold")
    @classmethod
    def validate_tau(cls, v):
        if v != "adaptive" and not v > 0:
            raise ValueError("clip threshold must be positive or 'adaptive'")
        return v


class AttackSection(_Section):
    kind: ATTACK_CHOICES = Field("none", description="Attack kind")
    lam: float = Field(4.0, ge=0, description="XFED lambda")
    window: int = Field(8, ge=1, description="XFED history window Omega")
    jitter: float = Field(0.0, ge=0, description="XFED jitter scale")
    z_max: float = Field(1.0, ge=0, le=1, description="LIE z_max")
    perturbation: Literal["inverse-unit-vector", "inverse-sign"] = Field(
        "inverse-unit-vector", description="Min-Max / Min-Sum direction"
    )
    search_tolerance: float = Field(1e-3, gt=0, description="Min-Max / Min-Sum bisection tolerance")
    mpaf_lambda: float = Field(1e6, gt=0, description="MPAF amplification")
    mpaf_max_norm: Optional[float] = Field(100.0, gt=0, description="MPAF step norm bound; null disables it")
    num_fake: Optional[int] = Field(None, ge=0, description="Fake clients; defaults to floor(m * k)")


class ExperimentConfig(_Section):
    """
    Validated experiment file.

    Round-trips through to_yaml(); digest() identifies the run,
    baseline_digest() identifies its no-attack twin.
    """
    name: str = Field("experiment", min_length=1, description="Label used in reports")
    seed: int = Field(0, ge=0, description="Master seed")
    clients: int = Field(20, ge=1, description="Genuine client count k")
    malicious_fraction: float = Field(0.2, ge=0, lt=1, description="Malicious fraction m")
    rounds: int = Field(100, ge=MIN_ROUNDS, description="Training rounds T")
    setting: Literal["cross-silo", "cross-device"] = Field("cross-silo", description="FL setting")
    participation: float = Field(1.0, gt=0, le=1, description="Cross-device participation q")
    model: ModelSection = Field(default_factory=ModelSection)
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    partition: PartitionSection = Field(default_factory=PartitionSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    aggregator: AggregatorSection = Field(default_factory=AggregatorSection)
    attack: AttackSection = Field(default_factory=AttackSection)

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "name": "desk-fedavg-xfed",
                "seed": 7,
                "clients": 20,
                "malicious_fraction": 0.2,
                "rounds": 100,
                "aggregator": {"kind": "fed-avg"},
                "attack": {"kind": "xfed-uv", "lam": 4.0},
            }
        },
    )

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        """SHA-256 over sorted-key JSON of the validated config"""
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def without_attack(self) -> "ExperimentConfig":
        """Same run with the attack section neutralised (kind none, defaults)"""
        data = self.canonical()
        data["attack"] = AttackSection().model_dump(mode="json")
        return ExperimentConfig.model_validate(data)

    def baseline_digest(self) -> str:
        return self.without_attack().digest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.canonical(), sort_keys=False)


AXIS_FIELDS = {
    "malicious-fraction": ("malicious_fraction",),
    "non-iid-p": ("partition", "p"),
    "lambda": ("attack", "lam"),
    "omega": ("attack", "window"),
    "root-bias": ("aggregator", "root_bias"),
    "participation": ("participation",),
}


def apply_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of cfg with the swept field set (re-validated)"""
    data = cfg.canonical()
    path = AXIS_FIELDS[axis]
    target = data
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = int(value) if axis == "omega" else value
    if axis == "participation":
        data["setting"] = "cross-device"
    return ExperimentConfig.model_validate(data)


class SweepSpec(_Section):
    """A base experiment, one swept axis and its values"""
    base: str = Field(..., min_length=1, description="Experiment file, relative to the sweep file")
    axis: SWEEP_AXES = Field(..., description="Swept parameter")
    values: List[float] = Field(..., min_length=1, description="Values to sweep")
    paired: bool = Field(True, description="Also run the no-attack twin of every value")

    @model_validator(mode="after")
    def check_values(self):
        for v in self.values:
            if self.axis == "malicious-fraction" and not (0 <= v < 1):
                raise ValueError(f"malicious fraction {v} outside [0, 1)")
            if self.axis in ("non-iid-p", "participation") and not (0 < v <= 1):
                raise ValueError(f"{self.axis} value {v} outside (0, 1]")
            if self.axis == "lambda" and v < 0:
                raise ValueError(f"lambda {v} must be >= 0")
            if self.axis == "omega" and (v < 1 or v != int(v)):
                raise ValueError(f"omega {v} must be a positive integer")
            if self.axis == "root-bias" and not (0 <= v < 1):
                raise ValueError(f"root bias {v} outside [0, 1)")
        return self


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a YAML file, or JSON when the suffix is .json"""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{path}: file not found")
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.model_validate(read_document(path))


def load_sweep(path: Union[str, Path]):
    """Returns (SweepSpec, base ExperimentConfig)"""
    path = Path(path)
    spec = SweepSpec.model_validate(read_document(path))
    base = load_config(path.parent / spec.base)
    for value in spec.values:
        apply_axis(base, spec.axis, value)
    return spec, base


__all__ = [
    "ExperimentConfig",
    "ModelSection",
    "DatasetSection",
    "PartitionSection",
    "TrainingSection",
    "AggregatorSection",
    "AttackSection",
    "SweepSpec",
    "AXIS_FIELDS",
    "apply_axis",
    "read_document",
    "load_config",
    "load_sweep",
]
