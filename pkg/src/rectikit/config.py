"""JSON experiment configuration. Unknown keys are rejected at every level."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import KINDS
from .errors import DomainError
from .rectify import TrainConfig
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "gauss8"
    n_samples: int = 8000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown dataset kind {self.kind!r}")
        if self.n_samples < 1:
            raise DomainError("dataset.n_samples must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    time_embed_dim: int = 16
    cond_embed_dim: int = 8
    hidden_widths: tuple[int, ...] = (128, 128, 128)


@dataclass(frozen=True)
class PairGenConfig:
    n_pairs: int = 20_000
    solver_steps: int = 100
    w: float = 1.5
    seed: int = 1

    def __post_init__(self):
        if self.n_pairs < 1 or self.solver_steps < 1:
            raise DomainError("pairgen.n_pairs and pairgen.solver_steps must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    steps: tuple[int, ...] = (3, 5, 10, 25, 200)
    w: tuple[float, ...] = (1.0, 1.5, 2.5, 5.0, 7.5)
    n_samples: int = 4096
    seed: int = 2
    reference_steps: int = 100

    def __post_init__(self):
        if not self.steps or not self.w:
            raise DomainError("eval.steps and eval.w must be nonempty")
        if min(self.steps) < 1 or self.reference_steps < 1:
            raise DomainError("step counts must be >= 1")
        if self.n_samples < 24:
            raise DomainError("eval.n_samples too small for per-condition statistics")


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    teacher_train: TrainConfig = field(default_factory=lambda: TrainConfig(seed=10))
    pairgen: PairGenConfig = field(default_factory=PairGenConfig)
    # the student is a fine-tune of the teacher, hence the much smaller step size
    student_train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=5e-5, seed=20))
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/default"
    deterministic: bool = True

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


_TUPLE_FIELDS = {"hidden_widths", "steps", "w"}


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise DomainError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise DomainError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise DomainError(f"{where}: {exc}") from None


_SECTIONS = {
    "schedule": NoiseSchedule,
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "teacher_train": TrainConfig,
    "pairgen": PairGenConfig,
    "student_train": TrainConfig,
    "eval": EvalConfig,
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise DomainError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"output_dir", "deterministic"})
    if unknown:
        raise DomainError(f"config: unknown key(s) {', '.join(unknown)}")
    kwargs = {name: _build(cls, raw[name], name) for name, cls in _SECTIONS.items() if name in raw}
    for key in ("output_dir", "deterministic"):
        if key in raw:
            kwargs[key] = raw[key]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)
