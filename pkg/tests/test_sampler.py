import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rectikit import DomainError, NoiseSchedule, ddim_step, euler_step, guided_eps, make_grid, sample
from rectikit.sampler import TimeGrid
from rectikit.schedule import alpha_sigma, lambda_of_t

from conftest import ConstantModel, GaussianOracle


class SplitModel:
    """Unconditional branch returns [0, 0], conditional branch [1, 0]."""

    def predict_eps(self, x, t, c=-1):
        out = np.zeros_like(np.asarray(x, dtype=float))
        if not np.all(np.asarray(c) == -1):
            out[..., 0] = 1.0
        return out


def test_grid_uniform_t():
    assert make_grid(1).times == (1.0, 0.0)
    assert make_grid(4).times == (1.0, 0.75, 0.5, 0.25, 0.0)


def test_grid_uniform_lambda(schedule):
    grid = make_grid(10, "uniform-lambda", schedule)
    times = np.array(grid.times)
    assert times[0] == 1.0 and times[-1] == 0.0 and len(times) == 11
    assert np.all(np.diff(times) < 0)
    lam = lambda_of_t(schedule, times[1:-1])
    assert np.all(np.diff(lam) > 0)
    np.testing.assert_allclose(np.diff(lam), np.diff(lam)[0], rtol=1e-8)


def test_grid_errors():
    with pytest.raises(DomainError):
        make_grid(0)
    with pytest.raises(DomainError):
        make_grid(3, "cosine")
    with pytest.raises(DomainError):
        TimeGrid(2, (1.0, 0.7, 0.8))


def test_ddim_zero_eps_rescales(schedule):
    x = np.array([0.4, -1.2])
    a_s, _ = alpha_sigma(schedule, 0.8)
    a_t, _ = alpha_sigma(schedule, 0.3)
    np.testing.assert_allclose(ddim_step(schedule, x, 0.8, 0.3, np.zeros(2)), a_t / a_s * x, rtol=1e-15)


@pytest.mark.parametrize("s", [1.0, 0.6, 0.05])
def test_ddim_recovers_clean_sample_at_zero(schedule, s):
    rng = np.random.default_rng(0)
    z, eps = rng.normal(size=2), rng.normal(size=2)
    a, sig = alpha_sigma(schedule, s)
    x_s = a * z + sig * eps
    # at s = 1 the 1/alpha factor (~150) amplifies rounding of x_s
    np.testing.assert_allclose(ddim_step(schedule, x_s, s, 0.0, eps), z, rtol=0, atol=1e-12 / a)


def test_ddim_constant_eps_composes_exactly(schedule):
    rng = np.random.default_rng(1)
    x, eps = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
    direct = ddim_step(schedule, x, 0.9, 0.1, eps)
    y = x
    ts = np.linspace(0.9, 0.1, 101)
    for s, t in zip(ts[:-1], ts[1:]):
        y = ddim_step(schedule, y, s, t, eps)
    assert np.max(np.abs(direct - y)) < 1e-9


@pytest.mark.parametrize("step", [ddim_step, euler_step])
def test_steps_reject_forward_time(schedule, step):
    with pytest.raises(DomainError):
        step(schedule, np.zeros(2), 0.3, 0.5, np.zeros(2))


def test_euler_zero_step(schedule):
    x = np.array([1.0, 2.0])
    assert np.array_equal(euler_step(schedule, x, 0.4, 0.4, np.ones(2)), x)


def test_euler_and_ddim_agree_on_standard_normal_oracle(schedule):
    # for eps = sigma_t x the exact path is x_t = const, which Euler reproduces
    # exactly; DDIM is first order here (~0.2% relative error at 1000 steps)
    model = GaussianOracle(schedule)
    noise = np.random.default_rng(2).normal(size=(64, 2))
    gaps = {}
    for n in (1000, 10_000):
        grid = make_grid(n)
        x_e, _ = sample(model, schedule, grid, 0, 1.0, noise, solver="euler")
        x_d, _ = sample(model, schedule, grid, 0, 1.0, noise, solver="ddim")
        np.testing.assert_allclose(x_e, noise, atol=1e-12)
        gaps[n] = np.max(np.abs(x_e - x_d))
    assert gaps[1000] < 1e-2
    assert gaps[10_000] < 1e-3
    assert gaps[1000] / gaps[10_000] == pytest.approx(10.0, rel=0.1)


def test_euler_converges_first_order(schedule):
    # data ~ N(0, 0.5^2): the ODE path is x_t = sqrt(alpha^2 s^2 + sigma^2) * z
    model = GaussianOracle(schedule, std=0.5)
    noise = np.array([[1.3, -0.7]])
    reference, _ = sample(model, schedule, make_grid(100_000), 0, 1.0, noise, solver="euler")
    np.testing.assert_allclose(reference, 0.5 * noise, atol=1e-3)
    err = {}
    for n in (10, 100):
        x, _ = sample(model, schedule, make_grid(n), 0, 1.0, noise, solver="euler")
        err[n] = np.abs(x - reference).max()
    assert err[10] > err[100]


def test_guided_eps_special_cases(tiny_model):
    x = np.array([0.3, 0.1])
    assert np.array_equal(guided_eps(tiny_model, x, 0.5, 1, 1.0), tiny_model.predict_eps(x, 0.5, 1))
    assert np.array_equal(guided_eps(tiny_model, x, 0.5, 1, 0.0), tiny_model.predict_eps(x, 0.5, -1))
    np.testing.assert_array_equal(guided_eps(SplitModel(), np.zeros(2), 0.5, 3, 1.5), [1.5, 0.0])


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_guidance_is_affine_in_w(w1, w2):
    model = SplitModel()
    x = np.zeros(2)
    mid = guided_eps(model, x, 0.5, 2, 0.5 * (w1 + w2))
    avg = 0.5 * (guided_eps(model, x, 0.5, 2, w1) + guided_eps(model, x, 0.5, 2, w2))
    np.testing.assert_allclose(mid, avg, rtol=1e-12, atol=1e-12)


def test_single_step_sample_is_one_ddim_step(schedule, tiny_model):
    noise = np.array([0.5, -0.25])
    x0, _ = sample(tiny_model, schedule, make_grid(1), 2, 1.5, noise)
    expect = ddim_step(schedule, noise, 1.0, 0.0, guided_eps(tiny_model, noise, 1.0, 2, 1.5))
    assert np.array_equal(x0, expect)


def test_sample_is_deterministic(schedule, tiny_model):
    noise = np.random.default_rng(3).normal(size=(10, 2))
    a, _ = sample(tiny_model, schedule, make_grid(7), 1, 2.0, noise)
    b, _ = sample(tiny_model, schedule, make_grid(7), 1, 2.0, noise)
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 200), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_constant_model_is_step_count_invariant(n, eps):
    schedule = NoiseSchedule()
    model = ConstantModel(eps)
    noise = np.random.default_rng(n).normal(size=(8, 2))
    one, _ = sample(model, schedule, make_grid(1), 0, 1.0, noise)
    many, _ = sample(model, schedule, make_grid(n), 0, 1.0, noise)
    assert np.max(np.abs(one - many)) < 1e-9


def test_refinement_gaps_shrink(schedule):
    model = GaussianOracle(schedule, std=0.3)
    noise = np.random.default_rng(4).normal(size=(32, 2))
    gaps = []
    for n in (5, 10, 20, 40):
        a, _ = sample(model, schedule, make_grid(n), 0, 1.0, noise)
        b, _ = sample(model, schedule, make_grid(2 * n), 0, 1.0, noise)
        gaps.append(np.linalg.norm(a - b))
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("solver", ["ddim", "euler"])
def test_trajectory_replays_exactly(schedule, tiny_model, solver):
    noise = np.random.default_rng(5).normal(size=(4, 2))
    grid = make_grid(6)
    x0, traj = sample(tiny_model, schedule, grid, 0, 1.5, noise, solver=solver, record=True)
    assert len(traj.states) == 7 and len(traj.eps_history) == 6
    assert np.array_equal(traj.states[0], noise) and np.array_equal(traj.states[-1], x0)
    step = ddim_step if solver == "ddim" else euler_step
    for i, (s, t) in enumerate(zip(grid.times[:-1], grid.times[1:])):
        eps = guided_eps(tiny_model, traj.states[i], s, 0, 1.5)
        assert np.array_equal(eps, traj.eps_history[i])
        assert np.array_equal(step(schedule, traj.states[i], s, t, eps), traj.states[i + 1])


def test_unknown_solver(schedule, tiny_model):
    with pytest.raises(DomainError):
        sample(tiny_model, schedule, make_grid(2), 0, 1.0, np.zeros(2), solver="pndm")
