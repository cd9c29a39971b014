import numpy as np
import pytest

from diffshift.denoisers import AnalyticGaussianDenoiser, GaussianMoments, MLPDenoiser
from diffshift.schedule import q_sample
from diffshift.training import (TrainConfig, Trainer, TrainingError,
                                evaluate_loss, simple_loss_and_grad, smoothed,
                                train)
from diffshift.datasets import swiss_roll
from diffshift.rng import substream


class PerfectPredictor:
    """Returns the exact noise used by the loss harness below."""

    def __init__(self, eps):
        self.eps = eps

    def predict(self, x, t):
        return self.eps


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_gradient_matches_central_differences(schedule):
    rng = np.random.default_rng(1)
    model = MLPDenoiser(3, schedule, hidden=(8, 8), temb_dim=4, rng=rng)
    x0 = rng.standard_normal((5, 3))
    t = rng.integers(0, schedule.T, 5)
    eps = rng.standard_normal((5, 3))
    _, gW, gb = simple_loss_and_grad(model, x0, t, eps, schedule)
    params = model.weights + model.biases
    grads = gW + gb
    h = 1e-5
    worst = 0.0
    check_rng = np.random.default_rng(2)
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        for idx in check_rng.choice(flat.size, size=min(10, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _, _ = simple_loss_and_grad(model, x0, t, eps, schedule)
            flat[idx] = orig - h
            lm, _, _ = simple_loss_and_grad(model, x0, t, eps, schedule)
            flat[idx] = orig
            fd = (lp - lm) / (2 * h)
            ref = max(abs(fd), abs(g.reshape(-1)[idx]), 1e-10)
            worst = max(worst, abs(fd - g.reshape(-1)[idx]) / ref)
    assert worst < 1e-4


def test_perfect_predictor_zero_loss(schedule):
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((8, 2))
    t = rng.integers(0, schedule.T, 8)
    eps = rng.standard_normal((8, 2))
    assert evaluate_loss(PerfectPredictor(eps), x0, t, eps, schedule) == 0.0


def test_frozen_analytic_loss_constant(schedule):
    comps = [GaussianMoments(mean=np.zeros(2), variance=np.ones(2))]
    model = AnalyticGaussianDenoiser(comps, schedule)
    rng = np.random.default_rng(4)
    losses = []
    for _ in range(6):
        x0 = rng.standard_normal((512, 2))
        t = rng.integers(0, schedule.T, 512)
        eps = rng.standard_normal((512, 2))
        losses.append(evaluate_loss(model, x0, t, eps, schedule))
    losses = np.array(losses)
    # no optimizer updates: only Monte-Carlo spread around the Bayes risk
    assert losses.std() < 0.1 * losses.mean()


def test_analytic_beats_mlp_on_simple_loss(schedule):
    comps = [GaussianMoments(mean=np.zeros(2), variance=np.ones(2))]
    oracle = AnalyticGaussianDenoiser(comps, schedule)
    mlp = MLPDenoiser(2, schedule, rng=substream(0, "init"))
    rng = np.random.default_rng(7)
    for _ in range(5):
        x0 = rng.standard_normal((256, 2))
        t = rng.integers(0, schedule.T, 256)
        eps = rng.standard_normal((256, 2))
        assert evaluate_loss(oracle, x0, t, eps, schedule) <= \
            evaluate_loss(mlp, x0, t, eps, schedule)


def test_training_reproducible(schedule):
    data = swiss_roll(200, substream(1, "data"))
    curves = []
    for _ in range(2):
        model = MLPDenoiser(2, schedule, hidden=(16,), temb_dim=8,
                            rng=substream(1, "init"))
        _, losses = train(model, data, TrainConfig(steps=40, seed=3), schedule)
        curves.append(losses)
    assert np.array_equal(curves[0], curves[1])


def test_zero_learning_rate_flat(schedule):
    data = swiss_roll(200, substream(2, "data"))
    model = MLPDenoiser(2, schedule, hidden=(16,), temb_dim=8,
                        rng=substream(2, "init"))
    _, losses = train(model, data, TrainConfig(steps=200, learning_rate=1e-30,
                                               optimizer="sgd", seed=0), schedule)
    # no-update case: zero trend, just sampling noise around a constant
    slope = np.polyfit(np.arange(len(losses)), losses, 1)[0]
    se = losses.std() / np.sqrt(len(losses)) / np.std(np.arange(len(losses)))
    assert abs(slope) < 3 * se


def test_swiss_roll_loss_decreases(schedule):
    data = swiss_roll(2000, substream(0, "data"))
    model = MLPDenoiser(2, schedule, rng=substream(0, "init"))
    _, losses = train(model, data, TrainConfig(steps=3000, learning_rate=5e-4,
                                               seed=0), schedule)
    sm = smoothed(losses)
    assert sm[-1] < 0.7 * sm[0]


def test_single_point_dataset_low_floor(schedule):
    data = np.full((1, 2), 0.3)
    model = MLPDenoiser(2, schedule, rng=substream(1, "init"))
    _, losses = train(model, data, TrainConfig(steps=3000, seed=1), schedule)
    assert smoothed(losses)[-1] <= 0.05


def test_divergence_raises(schedule):
    data = swiss_roll(100, substream(3, "data"))
    model = MLPDenoiser(2, schedule, hidden=(16,), temb_dim=8,
                        rng=substream(3, "init"))
    with pytest.raises(TrainingError):
        train(model, data, TrainConfig(steps=200, learning_rate=1e12,
                                       optimizer="sgd", seed=0), schedule)


def test_invalid_dataset(schedule):
    model = MLPDenoiser(2, schedule, hidden=(8,), temb_dim=4)
    with pytest.raises(TrainingError):
        train(model, np.zeros((0, 2)), TrainConfig(steps=1), schedule)
