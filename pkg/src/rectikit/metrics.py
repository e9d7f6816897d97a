"""Sample-quality and straightness metrics for 2-D generators."""

from __future__ import annotations

import numpy as np

from .data import mode_assignment
from .errors import DomainError
from .sampler import make_grid, sample

JITTER = 1e-10


def sqrtm_2x2(m: np.ndarray) -> np.ndarray:
    """Principal square root of a 2x2 symmetric PSD matrix.

    Uses ``sqrt(M) = (M + s I) / sqrt(tr M + 2 s)`` with ``s = sqrt(det M)``.
    """
    s = np.sqrt(max(np.linalg.det(m), 0.0))
    denom = np.sqrt(np.trace(m) + 2.0 * s)
    if denom == 0.0:
        return np.zeros_like(m)
    return (m + s * np.eye(2)) / denom


def _sqrtm_sym(m):
    if m.shape == (2, 2):
        return sqrtm_2x2(m)
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def gaussian_fit(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1] + 1:
        raise DomainError(f"need at least data_dim+1 samples, got shape {x.shape}")
    return x.mean(axis=0), np.cov(x, rowvar=False)


def frechet_gaussian(gen, ref) -> float:
    """2-Wasserstein distance between Gaussian fits of two sample sets (not squared)."""
    m1, c1 = gaussian_fit(gen)
    m2, c2 = gaussian_fit(ref)
    if m1.shape != m2.shape:
        raise DomainError("sample sets have different dimensionality")
    eye = np.eye(len(m1))
    c1, c2 = c1 + JITTER * eye, c2 + JITTER * eye
    r1 = _sqrtm_sym(c1)
    cross = _sqrtm_sym(r1 @ c2 @ r1)
    d2 = float(np.sum((m1 - m2) ** 2) + np.trace(c1 + c2 - 2.0 * cross))
    return float(np.sqrt(max(d2, 0.0)))


def condition_fidelity(x0, intended, kind: str = "gauss8") -> float:
    """Fraction of samples whose nearest gauss8 mode is the intended condition."""
    if kind != "gauss8":
        raise DomainError("condition fidelity is defined on the gauss8 benchmark only")
    x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
    intended = np.asarray(intended).reshape(-1)
    if len(x0) != len(intended) or len(x0) == 0:
        raise DomainError("need one intended condition per sample")
    return float(np.mean(mode_assignment(x0, kind) == intended))


def prediction_drift(traj) -> float:
    """Mean squared deviation of the per-step eps predictions from their average.

    For a batched trajectory the per-trajectory value is averaged over the batch.
    Zero iff the prediction never changes along the path.
    """
    hist = np.asarray(traj.eps_history if hasattr(traj, "eps_history") else traj, dtype=float)
    if hist.shape[0] < 2:
        raise DomainError("prediction drift needs at least 2 eps predictions")
    dev = hist - hist.mean(axis=0, keepdims=True)
    return float(np.mean(np.sum(dev * dev, axis=-1)))


def endpoint_gap(model, schedule, c, w: float, noise, few: int, many: int,
                 solver: str = "ddim") -> float:
    """Mean distance between ``few``-step and ``many``-step endpoints from the same noise."""
    if few > many:
        raise DomainError(f"need few <= many, got {few} > {many}")
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape[0] == 0:
        raise DomainError("noise set is empty")
    x_few, _ = sample(model, schedule, make_grid(few), c, w, noise, solver=solver)
    if few == many:
        return 0.0
    x_many, _ = sample(model, schedule, make_grid(many), c, w, noise, solver=solver)
    return float(np.mean(np.linalg.norm(x_few - x_many, axis=1)))
