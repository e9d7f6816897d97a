"""Teacher training, deterministic pair generation and student retraining.

The teacher is trained with the usual random coupling: each step draws fresh
noise for every data point. Pair generation then fixes a noise vector per
record, solves the teacher's ODE from it and stores ``(c, eps, x0)``. The
student starts as a copy of the teacher and regresses each record's own eps
from ``alpha_t * x0 + sigma_t * eps``.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from ._io import atomic_write_bytes
from .denoiser import NULL, DenoiserModel
from .errors import DomainError, FormatError, GenerationError, TrainingError
from .optim import AdamState, adamw_step
from .sampler import make_grid, sample
from .schedule import T_MIN_CLIP, NoiseSchedule, alpha_sigma

log = logging.getLogger(__name__)

PAIR_MAGIC = b"RDIFPAIR"
PAIR_VERSION = 1
MAX_REJECT_FRACTION = 0.01


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20_000
    batch_size: int = 128
    lr: float = 1e-3
    cond_dropout: float = 0.1
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if not self.lr > 0:
            raise DomainError("lr must be positive")
        if not 0.0 <= self.cond_dropout < 1.0:
            raise DomainError("cond_dropout must lie in [0, 1)")


@dataclass
class TrainResult:
    model: DenoiserModel
    losses: np.ndarray
    null_fraction: float


BatchHook = Callable[[dict], None]


def _train_loop(model, schedule, config, draw_batch, hook=None) -> TrainResult:
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros(model.num_params)
    losses = np.empty(config.iterations)
    n_null = 0
    for it in range(config.iterations):
        x0, eps, c = draw_batch(rng, config.batch_size)
        t = rng.uniform(T_MIN_CLIP, 1.0, config.batch_size)
        alpha, sigma = alpha_sigma(schedule, t)
        x_t = alpha[:, None] * x0 + sigma[:, None] * eps
        drop = rng.random(config.batch_size) < config.cond_dropout
        c = np.where(drop, NULL, c)
        n_null += int(drop.sum())
        if hook is not None:
            hook({"x0": x0, "eps": eps, "t": t, "c": c, "x_t": x_t, "target": eps})
        bundle = model.loss_and_grad(x_t, t, c, eps)
        if not np.isfinite(bundle.loss):
            raise TrainingError(f"non-finite loss {bundle.loss} at iteration {it}")
        adamw_step(model, bundle, config.lr, state, weight_decay=config.weight_decay)
        losses[it] = bundle.loss
    total = config.iterations * config.batch_size
    return TrainResult(model, losses, n_null / total if total else 0.0)


def train_teacher(data, config: TrainConfig, schedule: NoiseSchedule | None = None,
                  model: DenoiserModel | None = None, hook: BatchHook | None = None,
                  **arch) -> TrainResult:
    """Standard eps-prediction training with fresh noise per step.

    ``data`` is anything with ``x0`` (n, d) and ``c`` (n,) arrays. A fresh model
    is built from ``arch`` (seeded by ``config.seed``) unless one is passed.
    """
    schedule = schedule or NoiseSchedule()
    x0_all, c_all = np.asarray(data.x0, dtype=float), np.asarray(data.c)
    if len(x0_all) == 0:
        raise DomainError("training dataset is empty")
    if model is None:
        arch.setdefault("data_dim", x0_all.shape[1])
        arch.setdefault("num_conditions", int(c_all.max()) + 1)
        model = DenoiserModel.initialize(np.random.default_rng([config.seed, 1]), **arch)

    def draw(rng, b):
        idx = rng.integers(0, len(x0_all), b)
        return x0_all[idx], rng.standard_normal((b, x0_all.shape[1])), c_all[idx]

    return _train_loop(model, schedule, config, draw, hook)


class PairRecord(NamedTuple):
    condition: int
    eps: np.ndarray
    x0: np.ndarray


@dataclass(frozen=True)
class Provenance:
    teacher_hash: str
    solver: str
    steps: int
    w: float
    seed: int


@dataclass
class PairDataset:
    conditions: np.ndarray
    eps: np.ndarray
    x0: np.ndarray
    provenance: Provenance
    rejected: list = field(default_factory=list)

    def __len__(self):
        return len(self.conditions)

    def __getitem__(self, i) -> PairRecord:
        return PairRecord(int(self.conditions[i]), self.eps[i], self.x0[i])

    @property
    def data_dim(self) -> int:
        return self.eps.shape[1]

    def to_bytes(self) -> bytes:
        p = self.provenance
        out = bytearray(PAIR_MAGIC)
        out += struct.pack("<BIQ", PAIR_VERSION, self.data_dim, len(self))
        for text in (p.teacher_hash, p.solver, repr(float(p.w))):
            raw = text.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<Iq", p.steps, p.seed)
        rec = np.dtype([("c", "<i4"), ("eps", "<f8", (self.data_dim,)), ("x0", "<f8", (self.data_dim,))])
        table = np.empty(len(self), dtype=rec)
        table["c"], table["eps"], table["x0"] = self.conditions, self.eps, self.x0
        return bytes(out) + table.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PairDataset":
        if blob[:8] != PAIR_MAGIC:
            raise FormatError("not a pair file (bad magic)")
        try:
            version, dim, n = struct.unpack_from("<BIQ", blob, 8)
            if version != PAIR_VERSION:
                raise FormatError(f"unsupported pair file version {version}")
            offset = 8 + struct.calcsize("<BIQ")
            texts = []
            for _ in range(3):
                (length,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                texts.append(blob[offset:offset + length].decode("utf-8"))
                offset += length
            steps, seed = struct.unpack_from("<Iq", blob, offset)
            offset += struct.calcsize("<Iq")
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(f"corrupt pair file header: {exc}") from None
        rec = np.dtype([("c", "<i4"), ("eps", "<f8", (dim,)), ("x0", "<f8", (dim,))])
        if len(blob) - offset != n * rec.itemsize:
            raise FormatError("pair file length does not match its header")
        table = np.frombuffer(blob, dtype=rec, offset=offset, count=n)
        prov = Provenance(texts[0], texts[1], steps, float(texts[2]), seed)
        return cls(table["c"].astype(np.int64), table["eps"].astype(np.float64),
                   table["x0"].astype(np.float64), prov)


def save_pairs(pairs: PairDataset, path) -> None:
    atomic_write_bytes(Path(path), pairs.to_bytes())


def load_pairs(path) -> PairDataset:
    return PairDataset.from_bytes(Path(path).read_bytes())


def generate_pairs(teacher, schedule: NoiseSchedule, n_pairs: int, conditions=None,
                   solver_steps: int = 100, w: float = 1.5, seed: int = 0,
                   solver: str = "ddim", chunk: int = 4096) -> PairDataset:
    """Solve the teacher ODE from seeded noise and keep each (c, eps, x0) triple.

    ``conditions`` is the set of ids to draw uniformly from; by default every
    condition of the teacher. Rows with non-finite x0 are dropped and logged;
    more than 1% of them raises :class:`GenerationError`.
    """
    if int(n_pairs) != n_pairs or n_pairs < 1:
        raise DomainError("n_pairs must be a positive integer")
    if conditions is None:
        conditions = np.arange(teacher.num_conditions)
    conditions = np.asarray(conditions, dtype=np.int64)
    rng = np.random.default_rng(seed)
    cs = conditions[rng.integers(0, len(conditions), n_pairs)]
    eps = rng.standard_normal((n_pairs, teacher.data_dim))
    grid = make_grid(solver_steps)
    x0 = np.empty_like(eps)
    for lo in range(0, n_pairs, chunk):
        sl = slice(lo, lo + chunk)
        x0[sl], _ = sample(teacher, schedule, grid, cs[sl], w, eps[sl], solver=solver)

    ok = np.all(np.isfinite(x0), axis=1)
    rejected = np.flatnonzero(~ok).tolist()
    for i in rejected:
        log.warning("pair %d (condition %d) produced non-finite x0; rejected", i, cs[i])
    if len(rejected) > MAX_REJECT_FRACTION * n_pairs:
        raise GenerationError(f"{len(rejected)} of {n_pairs} pairs were non-finite")
    digest = teacher.digest() if hasattr(teacher, "digest") else "analytic"
    prov = Provenance(digest, solver, int(solver_steps), float(w), int(seed))
    return PairDataset(cs[ok], eps[ok], x0[ok], prov, rejected)


def rectify_student(teacher: DenoiserModel, pairs: PairDataset, config: TrainConfig,
                    schedule: NoiseSchedule | None = None,
                    hook: BatchHook | None = None) -> TrainResult:
    """Retrain a copy of ``teacher`` on the fixed noise/sample coupling in ``pairs``."""
    if len(pairs) == 0:
        raise DomainError("pair dataset is empty")
    schedule = schedule or NoiseSchedule()
    student = teacher.copy()

    def draw(rng, b):
        idx = rng.integers(0, len(pairs), b)
        return pairs.x0[idx], pairs.eps[idx], pairs.conditions[idx]

    return _train_loop(student, schedule, config, draw, hook)
