import logging
from types import SimpleNamespace

import numpy as np
import pytest

from rectikit import (NULL, DenoiserModel, NoiseSchedule, DomainError, FormatError, GenerationError, PairDataset,
                      TrainConfig, generate_pairs, load_pairs, make_dataset, rectify_student,
                      save_pairs, train_teacher)
from rectikit.schedule import alpha_sigma

from conftest import GaussianOracle

TINY = dict(time_embed_dim=4, cond_embed_dim=2, hidden_widths=(8,))


@pytest.fixture(scope="module")
def small_teacher():
    data = make_dataset("gauss8", 400, 0)
    return train_teacher(data, TrainConfig(iterations=60, batch_size=32, seed=3), hidden_widths=(16, 16)).model


@pytest.fixture(scope="module")
def small_pairs(small_teacher):
    return generate_pairs(small_teacher, NoiseSchedule(), 64,
                          solver_steps=5, w=1.5, seed=11)


def test_train_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(cond_dropout=1.0)
    with pytest.raises(DomainError):
        TrainConfig(lr=0.0)
    with pytest.raises(DomainError):
        TrainConfig(batch_size=0)


def test_dropout_fraction_concentrates():
    data = make_dataset("gauss8", 64, 0)
    result = train_teacher(data, TrainConfig(iterations=10_000, batch_size=8, cond_dropout=0.1, seed=0),
                           **TINY)
    assert result.null_fraction == pytest.approx(0.1, abs=0.01)


def test_dropout_rows_are_null_in_batches():
    seen = []
    data = make_dataset("gauss8", 64, 0)
    train_teacher(data, TrainConfig(iterations=200, batch_size=16, cond_dropout=0.25, seed=1),
                  hook=lambda b: seen.append(b["c"].copy()), **TINY)
    c = np.concatenate(seen)
    assert set(np.unique(c)) <= set(range(-1, 8))
    assert np.mean(c == NULL) == pytest.approx(0.25, abs=0.04)


def test_single_point_loss_trends_down():
    data = SimpleNamespace(x0=np.zeros((1, 2)), c=np.zeros(1, dtype=int))
    result = train_teacher(data, TrainConfig(iterations=600, batch_size=32, lr=3e-3, seed=0),
                           hidden_widths=(32, 32))
    windows = result.losses.reshape(-1, 100).mean(axis=1)
    assert np.all(np.diff(windows) < 0)


def test_teacher_training_is_reproducible():
    data = make_dataset("gauss8", 200, 0)
    cfg = TrainConfig(iterations=50, batch_size=16, seed=9)
    a = train_teacher(data, cfg, **TINY).model
    b = train_teacher(data, cfg, **TINY).model
    assert a.to_bytes() == b.to_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_rejects_non_finite_loss():
    data = SimpleNamespace(x0=np.array([[np.inf, 0.0]]), c=np.zeros(1, dtype=int))
    with pytest.raises(ArithmeticError):
        train_teacher(data, TrainConfig(iterations=3, batch_size=2), **TINY)


def test_generate_pairs_is_deterministic(small_teacher, small_pairs, schedule):
    again = generate_pairs(small_teacher, schedule, 64, solver_steps=5, w=1.5, seed=11)
    assert again.to_bytes() == small_pairs.to_bytes()
    other = generate_pairs(small_teacher, schedule, 64, solver_steps=5, w=1.5, seed=12)
    assert not np.array_equal(other.eps, small_pairs.eps)


def test_pairs_record_the_noise_that_produced_them(small_teacher, small_pairs, schedule):
    from rectikit import make_grid, sample

    rec = small_pairs[5]
    x0, _ = sample(small_teacher, schedule, make_grid(5), rec.condition, 1.5, rec.eps)
    np.testing.assert_allclose(x0, rec.x0, rtol=1e-12)
    p = small_pairs.provenance
    assert (p.teacher_hash, p.solver, p.steps, p.w, p.seed) == (small_teacher.digest(), "ddim", 5, 1.5, 11)


def test_generate_pairs_argument_errors(small_teacher, schedule):
    with pytest.raises(DomainError):
        generate_pairs(small_teacher, schedule, 0)


def test_analytic_teacher_pairs_have_unit_covariance(schedule):
    pairs = generate_pairs(GaussianOracle(schedule), schedule, 4000, solver_steps=100, w=1.0, seed=0)
    assert np.max(np.abs(np.cov(pairs.x0, rowvar=False) - np.eye(2))) < 0.06
    assert pairs.provenance.teacher_hash == "analytic"


class NaNOnNegative(GaussianOracle):
    def predict_eps(self, x, t, c=-1):
        out = super().predict_eps(x, t, c)
        out[np.asarray(x)[..., 0] < self.cut] = np.nan
        return out


def test_non_finite_pairs_are_rejected_and_logged(schedule, caplog):
    model = NaNOnNegative(schedule)
    model.cut = -2.6  # ~0.5% of standard normal draws
    with caplog.at_level(logging.WARNING):
        pairs = generate_pairs(model, schedule, 2000, solver_steps=3, w=1.0, seed=0)
    assert 0 < len(pairs.rejected) <= 20
    assert len(pairs) == 2000 - len(pairs.rejected)
    assert np.all(np.isfinite(pairs.x0))
    assert "rejected" in caplog.text
    model.cut = -1.5
    with pytest.raises(GenerationError):
        generate_pairs(model, schedule, 2000, solver_steps=3, w=1.0, seed=0)


def test_pair_file_round_trip(small_pairs, tmp_path):
    path = tmp_path / "pairs.bin"
    save_pairs(small_pairs, path)
    blob = path.read_bytes()
    assert blob[:8] == b"RDIFPAIR"
    back = load_pairs(path)
    assert back.provenance == small_pairs.provenance
    assert back.to_bytes() == blob
    for name in ("conditions", "eps", "x0"):
        assert np.array_equal(getattr(back, name), getattr(small_pairs, name))


def test_pair_file_rejects_garbage(small_pairs):
    blob = small_pairs.to_bytes()
    with pytest.raises(FormatError):
        PairDataset.from_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        PairDataset.from_bytes(blob[:-3])


def test_zero_iteration_student_equals_teacher(small_teacher, small_pairs):
    student = rectify_student(small_teacher, small_pairs, TrainConfig(iterations=0)).model
    assert student.to_bytes() == small_teacher.to_bytes()
    assert student is not small_teacher


def test_student_uses_each_records_own_noise(small_teacher, small_pairs, schedule):
    pair_rows = {tuple(e) for e in small_pairs.eps}
    checked = []

    def hook(batch):
        assert batch["target"] is batch["eps"]
        a, s = alpha_sigma(schedule, batch["t"])
        np.testing.assert_array_equal(batch["x_t"], a[:, None] * batch["x0"] + s[:, None] * batch["eps"])
        assert all(tuple(e) in pair_rows for e in batch["eps"])
        checked.append(len(batch["eps"]))

    rectify_student(small_teacher, small_pairs, TrainConfig(iterations=20, batch_size=16), schedule, hook=hook)
    assert sum(checked) == 320


def test_teacher_is_not_mutated(small_teacher, small_pairs, schedule):
    digest = small_teacher.digest()
    generate_pairs(small_teacher, schedule, 16, solver_steps=3, seed=0)
    rectify_student(small_teacher, small_pairs, TrainConfig(iterations=30, batch_size=8), schedule)
    assert small_teacher.digest() == digest


def test_student_training_is_reproducible(small_teacher, small_pairs):
    cfg = TrainConfig(iterations=40, batch_size=16, seed=4)
    a = rectify_student(small_teacher, small_pairs, cfg).model
    b = rectify_student(small_teacher, small_pairs, cfg).model
    assert a.to_bytes() == b.to_bytes()


def test_empty_pairs_rejected(small_teacher, small_pairs):
    empty = PairDataset(small_pairs.conditions[:0], small_pairs.eps[:0], small_pairs.x0[:0],
                        small_pairs.provenance)
    with pytest.raises(DomainError):
        rectify_student(small_teacher, empty, TrainConfig(iterations=1))
