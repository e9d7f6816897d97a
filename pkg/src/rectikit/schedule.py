"""Variance-preserving noise schedule with a linear beta(t) on t in [0, 1].

    beta(t)  = beta_min + t * (beta_max - beta_min)
    alpha_t  = exp(-1/2 * int_0^t beta(u) du)
    sigma_t  = sqrt(1 - alpha_t^2)
    lambda_t = log(alpha_t / sigma_t)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RangeError

T_MIN_CLIP = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not (self.beta_min > 0 and self.beta_max > self.beta_min):
            raise DomainError(
                f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}"
            )

    def beta(self, t):
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def log_alpha(self, t):
        # closed form of -1/2 * int_0^t beta(u) du
        return -0.5 * (self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t)


def _check_unit_interval(t, lower_open=False):
    arr = np.asarray(t, dtype=float)
    bad = (arr <= 0.0) if lower_open else (arr < 0.0)
    if np.any(bad | (arr > 1.0)) or np.any(~np.isfinite(arr)):
        lo = "(0" if lower_open else "[0"
        raise DomainError(f"t must lie in {lo}, 1], got {t!r}")
    return arr


def alpha_sigma(schedule: NoiseSchedule, t):
    """Return ``(alpha_t, sigma_t)``; accepts a scalar or an array of times."""
    arr = _check_unit_interval(t)
    log_a = schedule.log_alpha(arr)
    alpha = np.exp(log_a)
    # -expm1 keeps sigma accurate for small t where alpha^2 ~ 1
    sigma = np.sqrt(-np.expm1(2.0 * log_a))
    if np.ndim(t) == 0:
        return float(alpha), float(sigma)
    return alpha, sigma


def lambda_of_t(schedule: NoiseSchedule, t):
    """Log-SNR ``log(alpha_t / sigma_t)``; infinite at t = 0, so t must be > 0."""
    arr = _check_unit_interval(t, lower_open=True)
    log_a = schedule.log_alpha(arr)
    lam = log_a - 0.5 * np.log(-np.expm1(2.0 * log_a))
    return float(lam) if np.ndim(t) == 0 else lam


def t_of_lambda(schedule: NoiseSchedule, lam, t_min: float = T_MIN_CLIP):
    """Invert :func:`lambda_of_t` on ``[t_min, 1]`` by bisection.

    Accepts a scalar or an array. Bisection runs until no bracket shrinks any
    further in floating point, which is well below the 1e-12 tolerance on t.
    """
    lam_arr = np.asarray(lam, dtype=np.float64)
    lam_hi = lambda_of_t(schedule, t_min)
    lam_lo = lambda_of_t(schedule, 1.0)
    bad = ~((lam_lo <= lam_arr) & (lam_arr <= lam_hi))
    if np.any(bad):
        raise RangeError(f"lambda={lam_arr[bad].flat[0]} outside [{lam_lo}, {lam_hi}]")
    lo = np.full(lam_arr.shape, float(t_min))  # lambda(lo) >= lam >= lambda(hi)
    hi = np.ones(lam_arr.shape)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        above = lambda_of_t(schedule, mid) > lam_arr
        lo = np.where(active & above, mid, lo)
        hi = np.where(active & ~above, mid, hi)
    pick_lo = np.abs(lambda_of_t(schedule, lo) - lam_arr) <= np.abs(lambda_of_t(schedule, hi) - lam_arr)
    out = np.where(pick_lo, lo, hi)
    out = np.where(lam_arr == lam_lo, 1.0, np.where(lam_arr == lam_hi, t_min, out))
    return float(out) if out.ndim == 0 else out


def drift_diffusion(schedule: NoiseSchedule, t):
    """VP forward-SDE coefficients: ``f(x, t) = f_coeff * x`` and ``g(t)``."""
    arr = _check_unit_interval(t)
    b = schedule.beta(arr)
    f_coeff, g = -0.5 * b, np.sqrt(b)
    if np.ndim(t) == 0:
        return float(f_coeff), float(g)
    return f_coeff, g
