"""Synthetic conditional 2-D datasets.

* ``gauss8``: 8 conditions; condition c is N(mu_c, 0.05^2 I) with mu_c on the
  unit circle at angle 2*pi*c/8.
* ``spiral2``: 2 interleaved spirals (second rotated by pi), radius
  ``r = theta / (3*pi)`` for theta ~ U(pi/2, 3*pi), radial noise 0.05.
* ``stdnormal``: a single condition with x0 ~ N(0, I).

Conditions are assigned round-robin (``i mod K``), so class sizes differ by at
most one. Each dataset is a pure function of ``(kind, n_samples, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import DomainError

KINDS = {"gauss8": 8, "spiral2": 2, "stdnormal": 1}
GAUSS8_STD = 0.05
SPIRAL_NOISE = 0.05


def gauss8_means() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass(frozen=True)
class SyntheticDataset:
    kind: str
    n_samples: int
    seed: int
    x0: np.ndarray
    c: np.ndarray

    @property
    def num_conditions(self) -> int:
        return KINDS[self.kind]

    @property
    def data_dim(self) -> int:
        return self.x0.shape[1]

    def __len__(self):
        return self.n_samples

    def to_csv(self, path) -> None:
        lines = ["x0,x1,c"]
        lines += [f"{a!r},{b!r},{int(c)}" for (a, b), c in zip(self.x0.tolist(), self.c)]
        atomic_write_text(Path(path), "\n".join(lines) + "\n")


def make_dataset(kind: str, n_samples: int, seed: int = 0) -> SyntheticDataset:
    if kind not in KINDS:
        raise DomainError(f"unknown dataset kind {kind!r}; choose from {sorted(KINDS)}")
    if int(n_samples) != n_samples or n_samples < 1:
        raise DomainError("n_samples must be a positive integer")
    n_samples = int(n_samples)
    rng = np.random.default_rng(seed)
    c = np.arange(n_samples) % KINDS[kind]
    if kind == "gauss8":
        x0 = gauss8_means()[c] + GAUSS8_STD * rng.standard_normal((n_samples, 2))
    elif kind == "spiral2":
        theta = rng.uniform(0.5 * np.pi, 3.0 * np.pi, n_samples)
        r = theta / (3.0 * np.pi) + SPIRAL_NOISE * rng.standard_normal(n_samples)
        phase = theta + np.pi * c
        x0 = np.stack([r * np.cos(phase), r * np.sin(phase)], axis=1)
    else:
        x0 = rng.standard_normal((n_samples, 2))
    return SyntheticDataset(kind, n_samples, int(seed), x0, c.astype(np.int64))


def mode_assignment(x, kind: str = "gauss8"):
    """Index of the nearest gauss8 mode; exact ties go to the smallest index.

    Accepts one point ``(2,)`` or a batch ``(n, 2)``.
    """
    if kind != "gauss8":
        raise DomainError(f"mode assignment is defined for gauss8 only, not {kind!r}")
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    d2 = ((pts[:, None, :] - gauss8_means()[None]) ** 2).sum(axis=2)
    # the unit-circle means differ in norm by a few ulps; treat those as ties
    near = d2 <= d2.min(axis=1, keepdims=True) + 1e-12
    labels = np.argmax(near, axis=1)
    return int(labels[0]) if x.ndim == 1 else labels
