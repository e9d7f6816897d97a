"""Probability-flow ODE solvers for eps-prediction models.

``ddim_step`` is the first-order exponential-integrator update, exact when the
eps-prediction is constant along the path. ``euler_step`` discretizes the ODE
``dx = [f(t) x + g(t)^2 / (2 sigma_t) eps] dt`` directly and serves as a
baseline. Models are duck-typed: anything with ``predict_eps(x, t, c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import NULL
from .errors import DomainError
from .schedule import (T_MIN_CLIP, NoiseSchedule, alpha_sigma, drift_diffusion, lambda_of_t,
                       t_of_lambda)


@dataclass(frozen=True)
class TimeGrid:
    steps: int
    times: tuple[float, ...]

    def __post_init__(self):
        times = self.times
        if len(times) != self.steps + 1 or times[0] != 1.0 or times[-1] != 0.0:
            raise DomainError("grid must run from 1 to 0 with steps+1 points")
        if any(a <= b for a, b in zip(times, times[1:])):
            raise DomainError("grid times must be strictly decreasing")


def make_grid(steps: int, scheme: str = "uniform-t", schedule: NoiseSchedule | None = None) -> TimeGrid:
    if int(steps) != steps or steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps!r}")
    steps = int(steps)
    if scheme == "uniform-t":
        times = [1.0 - i / steps for i in range(steps + 1)]
    elif scheme == "uniform-lambda":
        schedule = schedule or NoiseSchedule()
        lam = np.linspace(lambda_of_t(schedule, 1.0), lambda_of_t(schedule, T_MIN_CLIP), steps + 1)
        times = [t_of_lambda(schedule, v) for v in lam]
    else:
        raise DomainError(f"unknown grid scheme {scheme!r}")
    times[0], times[-1] = 1.0, 0.0
    return TimeGrid(steps, tuple(float(t) for t in times))


def _check_interval(s, t):
    if not t < s:
        raise DomainError(f"need t < s, got s={s}, t={t}")


def ddim_step(schedule: NoiseSchedule, x_s, s: float, t: float, eps_hat):
    _check_interval(s, t)
    a_s, sig_s = alpha_sigma(schedule, s)
    a_t, sig_t = alpha_sigma(schedule, t)
    return (a_t / a_s) * np.asarray(x_s) - a_t * (sig_s / a_s - sig_t / a_t) * np.asarray(eps_hat)


def euler_step(schedule: NoiseSchedule, x_s, s: float, t: float, eps_hat):
    x_s = np.asarray(x_s)
    if t == s:
        return x_s.copy()
    _check_interval(s, t)
    _, sig_s = alpha_sigma(schedule, s)
    if sig_s <= 0.0:
        raise DomainError(f"Euler step needs sigma_s > 0, got s={s}")
    f_coeff, g = drift_diffusion(schedule, s)
    velocity = f_coeff * x_s + (g * g / (2.0 * sig_s)) * np.asarray(eps_hat)
    return x_s + (t - s) * velocity


SOLVERS = {"ddim": ddim_step, "euler": euler_step}


def guided_eps(model, x, t, c, w: float):
    """Classifier-free guidance: ``(1 - w) * eps(x, t, NULL) + w * eps(x, t, c)``."""
    cond = model.predict_eps(x, t, c)
    if w == 1.0:
        return cond
    uncond = model.predict_eps(x, t, NULL)
    return (1.0 - w) * uncond + w * cond


@dataclass
class Trajectory:
    times: tuple[float, ...]
    states: list = field(default_factory=list)
    eps_history: list = field(default_factory=list)


def sample(model, schedule: NoiseSchedule, grid: TimeGrid, c, w: float, noise,
           solver: str = "ddim", record: bool = False):
    """Integrate from t=1 (``x = noise``) to t=0 and return ``(x0, trajectory)``.

    ``noise`` may be a single vector or a batch; the trajectory is ``None``
    unless ``record`` is set.
    """
    try:
        step = SOLVERS[solver]
    except KeyError:
        raise DomainError(f"unknown solver {solver!r}") from None
    x = np.asarray(noise, dtype=float)
    traj = Trajectory(grid.times, [x.copy()], []) if record else None
    for s, t in zip(grid.times[:-1], grid.times[1:]):
        eps_hat = guided_eps(model, x, s, c, w)
        x = step(schedule, x, s, t, eps_hat)
        if record:
            traj.eps_history.append(eps_hat)
            traj.states.append(x.copy())
    return x, traj
