"""Sweep evaluation: one :class:`EvalReport` per (model, steps, guidance) cell."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import DomainError
from .metrics import condition_fidelity, frechet_gaussian, prediction_drift
from .sampler import make_grid, sample

CSV_COLUMNS = ("model_id", "steps", "guidance_w", "frechet_gauss", "cond_fidelity",
               "pred_drift", "endpoint_gap", "n_samples", "seed")


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    steps: int
    guidance_w: float
    frechet_gauss: float
    cond_fidelity: float
    pred_drift: float
    endpoint_gap: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        for name in ("frechet_gauss", "cond_fidelity", "pred_drift", "endpoint_gap"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} is not finite in cell {self.model_id}/{self.steps}/{self.guidance_w}")


def class_conditional_frechet(x, c, ref_x, ref_c) -> float:
    """Average of per-condition Frechet distances between generated and reference sets."""
    labels = np.unique(ref_c)
    return float(np.mean([frechet_gaussian(x[c == k], ref_x[ref_c == k]) for k in labels]))


def nearest_neighbour_fidelity(x, c, ref_x, ref_c) -> float:
    """Fraction of samples whose nearest reference point carries the intended label."""
    d2 = ((x[:, None, :] - ref_x[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(ref_c[np.argmin(d2, axis=1)] == c))


def eval_inputs(n_samples: int, seed: int, num_conditions: int, data_dim: int = 2):
    """Seeded noise batch and round-robin intended conditions shared by every cell."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_samples, data_dim)), np.arange(n_samples) % num_conditions


def evaluate_cell(model, model_id: str, schedule, reference, steps: int, w: float,
                  n_samples: int, seed: int, reference_x0=None) -> EvalReport:
    """Score one sweep cell against a reference :class:`SyntheticDataset`.

    ``reference_x0`` are the same noises solved with many steps; the endpoint
    gap is measured against them (0 when omitted).
    """
    noise, cond = eval_inputs(n_samples, seed, reference.num_conditions, reference.data_dim)
    x0, traj = sample(model, schedule, make_grid(steps), cond, w, noise, record=True)
    if not np.all(np.isfinite(x0)):
        bad = int(np.sum(~np.isfinite(x0).all(axis=1)))
        raise ArithmeticError(f"{bad} non-finite samples in cell {model_id}/{steps}/{w}")
    fd = class_conditional_frechet(x0, cond, reference.x0, reference.c)
    if reference.kind == "gauss8":
        fid = condition_fidelity(x0, cond)
    else:
        fid = nearest_neighbour_fidelity(x0, cond, reference.x0, reference.c)
    drift = prediction_drift(traj) if steps >= 2 else 0.0
    gap = 0.0
    if reference_x0 is not None:
        gap = float(np.mean(np.linalg.norm(x0 - reference_x0, axis=1)))
    return EvalReport(model_id, int(steps), float(w), fd, fid, drift, gap, int(n_samples), int(seed))


def run_sweep(models: dict, schedule, reference, steps_list, w_list, n_samples: int,
              seed: int, reference_steps: int = 100, workers: int = 1) -> list[EvalReport]:
    """Evaluate every (model, steps, w) cell; rows come back in that nested order.

    Cells are independent, so with ``workers > 1`` they run on a thread pool;
    the output order does not depend on scheduling.
    """
    if not steps_list or not w_list:
        raise DomainError("steps and guidance lists must be nonempty")
    noise, cond = eval_inputs(n_samples, seed, reference.num_conditions, reference.data_dim)
    keys = [(mid, w) for mid in models for w in w_list]

    def reference_run(key):
        mid, w = key
        x, _ = sample(models[mid], schedule, make_grid(reference_steps), cond, w, noise)
        return x

    cells = [(mid, s, w) for mid in models for s in steps_list for w in w_list]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        refs = dict(zip(keys, pool.map(reference_run, keys)))

        def run(cell):
            mid, s, w = cell
            return evaluate_cell(models[mid], mid, schedule, reference, s, w,
                                 n_samples, seed, refs[(mid, w)])

        return list(pool.map(run, cells))


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        row = asdict(r)
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in CSV_COLUMNS])
    return buf.getvalue()


def write_reports(reports, path) -> None:
    atomic_write_text(Path(path), reports_to_csv(reports))


def read_reports(path) -> list[EvalReport]:
    types = {f.name: f.type for f in fields(EvalReport)}
    casts = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise DomainError(f"unexpected columns {reader.fieldnames}")
        return [EvalReport(**{k: casts[types[k]](v) for k, v in row.items()}) for row in reader]
