"""Noise-prediction training loop for the MLP denoiser.

One step: draw a timestep per example, corrupt the batch through the
forward kernel, regress the injected noise, apply one optimizer update.
Everything is single-threaded and seeded, so runs are bitwise repeatable.
"""

from dataclasses import dataclass

import numpy as np

from .denoisers import MLPDenoiser
from .schedule import NoiseSchedule, q_sample


class TrainingError(RuntimeError):
    """Divergence or invalid training setup."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")


def simple_loss_and_grad(model: MLPDenoiser, x0: np.ndarray, t: np.ndarray,
                         eps: np.ndarray, schedule: NoiseSchedule):
    """Mean squared noise-prediction error and its parameter gradients."""
    x_t = q_sample(x0, t, eps, schedule)
    out, cache = model.forward(x_t, t)
    resid = out - eps
    n = resid.size
    loss = float(np.mean(resid**2))
    gW, gb = model.backward(cache, 2.0 * resid / n)
    return loss, gW, gb


def evaluate_loss(model, x0: np.ndarray, t: np.ndarray, eps: np.ndarray,
                  schedule: NoiseSchedule) -> float:
    """Loss only, for frozen models (any predictor variant)."""
    x_t = q_sample(x0, t, eps, schedule)
    pred = model.predict(x_t, t)
    return float(np.mean((pred - eps) ** 2))


class _AdamState:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def update(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g**2
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


class Trainer:
    """Holds the optimizer state; one `step` = one gradient update."""

    def __init__(self, model: MLPDenoiser, schedule: NoiseSchedule,
                 config: TrainConfig):
        self.model = model
        self.schedule = schedule
        self.config = config
        params = model.weights + model.biases
        self._adam = _AdamState(params) if config.optimizer == "adam" else None

    def step(self, x0_batch: np.ndarray, rng: np.random.Generator) -> float:
        """Sample (t, eps) for the batch, update once, return pre-update loss."""
        n = x0_batch.shape[0]
        t = rng.integers(0, self.schedule.T, size=n)
        eps = rng.standard_normal(x0_batch.shape)
        loss, gW, gb = simple_loss_and_grad(self.model, x0_batch, t, eps, self.schedule)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged: loss={loss}")
        params = self.model.weights + self.model.biases
        grads = gW + gb
        if self._adam is not None:
            self._adam.update(params, grads, self.config.learning_rate)
        else:
            for p, g in zip(params, grads):
                p -= self.config.learning_rate * g
        return loss


def train(model: MLPDenoiser, dataset: np.ndarray, config: TrainConfig,
          schedule: NoiseSchedule):
    """Run the full loop; returns (model, per-step loss curve)."""
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 2 or len(dataset) == 0:
        raise TrainingError("dataset must be a non-empty (N, d) array")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    trainer = Trainer(model, schedule, config)
    losses = np.empty(config.steps)
    n = len(dataset)
    for i in range(config.steps):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        losses[i] = trainer.step(dataset[idx], rng)
    return model, losses


def smoothed(curve: np.ndarray, width: int = 100) -> np.ndarray:
    """Trailing moving average, for convergence checks on noisy loss curves."""
    width = min(width, len(curve))
    kernel = np.ones(width) / width
    return np.convolve(curve, kernel, mode="valid")
