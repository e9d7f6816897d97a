"""Adam with decoupled weight decay (AdamW)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TrainingError


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_update(params, grads, lr, state: AdamState, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.0):
    """In-place AdamW update of ``params``; advances ``state`` by one step."""
    if state.m.shape != params.shape or state.v.shape != params.shape:
        raise DomainError("optimizer state does not match parameter shape")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise TrainingError(
            f"non-finite gradient in {bad.size} entries (first index {bad[0]}) "
            f"at optimizer step {state.step + 1}"
        )
    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    if weight_decay:
        params -= lr * weight_decay * params
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def adamw_step(model, bundle, lr: float, state: AdamState, **kwargs):
    """Apply one AdamW step to ``model.params`` using ``bundle.grads``."""
    if lr <= 0:
        raise DomainError("learning rate must be positive")
    adamw_update(model.params, bundle.grads, lr, state, **kwargs)
    return model, state
