"""Noise schedules, time grids and the forward corruption kernel.

The schedule is the single source of diffusion-time truth: every sampler,
selector and diagnostic reads alpha_bar / variance ladders from here.
Timesteps are zero-based integers in [0, T-1]; t = 0 is the least noisy
level.  The sentinel t = -1 denotes clean data (alpha_bar = 1) and is only
meaningful as a transfer target, never as a ladder index.
"""

from dataclasses import dataclass, field
import hashlib

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


class ScheduleError(ValueError):
    """Invalid schedule parameters."""


class GridError(ValueError):
    """Invalid time-grid request."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta ladder and derived quantities.

    variances[t] = 1 - alpha_bars[t] holds exactly by construction; it is
    the per-step schedule variance that the time-shift selector matches
    measured sample variances against.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    variances: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t) -> np.ndarray:
        """alpha_bar at integer level(s) t; t = -1 maps to 1 (clean data)."""
        t = np.asarray(t)
        if np.any(t < -1) or np.any(t >= self.T):
            raise ScheduleError(f"timestep out of range [-1, {self.T - 1}]")
        return np.where(t < 0, 1.0, self.alpha_bars[np.maximum(t, 0)])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.T).tobytes())
        h.update(self.betas.tobytes())
        return h.hexdigest()


def build_schedule(
    kind: str = "linear",
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Construct a noise schedule.

    Only the linear beta ramp is supported.  The default range matches the
    common pretrained-DDPM convention; it is a convention choice, not a
    quantity any checkpoint dictates.
    """
    if kind != "linear":
        raise ScheduleError(f"unsupported schedule kind {kind!r}")
    if T < 1:
        raise ScheduleError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    variances = 1.0 - alpha_bars
    return NoiseSchedule(
        betas=_frozen(betas),
        alphas=_frozen(alphas),
        alpha_bars=_frozen(alpha_bars),
        variances=_frozen(variances),
    )


@dataclass(frozen=True)
class TimeGrid:
    """Subsampled set of timesteps.

    `steps` is stored ascending (unique, within [0, T-1]); samplers iterate
    `descending` because every backward chain runs T -> 0.
    """

    steps: np.ndarray
    mode: str
    c: float

    def __post_init__(self):
        s = np.asarray(self.steps, dtype=np.int64)
        if s.ndim != 1 or len(s) == 0:
            raise GridError("grid must be a non-empty 1-D set of steps")
        if np.any(np.diff(s) <= 0):
            raise GridError("grid steps must be strictly increasing")
        object.__setattr__(self, "steps", _frozen_int(s))

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def descending(self) -> np.ndarray:
        return self.steps[::-1]


def _frozen_int(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


def select_time_grid(schedule: NoiseSchedule, n: int, mode: str = "uniform") -> TimeGrid:
    """Pick n timesteps t_i = floor(c * i) (uniform) or floor(c * i^2) (quadratic).

    c is chosen so the grid spans [0, T-1]: uniform uses c = T / n with a
    final-step clamp, quadratic uses c = (T-1) / (n-1)^2.
    """
    T = schedule.T
    if n < 1 or n > T:
        raise GridError(f"need 1 <= n <= T, got n={n}, T={T}")
    i = np.arange(n)
    if mode == "uniform":
        c = T / n
        steps = np.minimum(np.floor(c * i), T - 1).astype(np.int64)
    elif mode == "quadratic":
        if n == 1:
            c = 0.0
            steps = np.zeros(1, dtype=np.int64)
        else:
            c = (T - 1) / (n - 1) ** 2
            steps = np.minimum(np.floor(c * i**2), T - 1).astype(np.int64)
    else:
        raise GridError(f"unknown grid mode {mode!r}")
    if len(np.unique(steps)) != len(steps):
        raise GridError(f"{mode} grid with n={n}, T={T} produces duplicate steps")
    return TimeGrid(steps=steps, mode=mode, c=float(c))


def grid_from_steps(schedule: NoiseSchedule, steps) -> TimeGrid:
    """Wrap an explicit ascending list of steps (e.g. for convergence studies)."""
    steps = np.asarray(steps, dtype=np.int64)
    if np.any(steps < 0) or np.any(steps >= schedule.T):
        raise GridError("explicit grid steps out of range")
    return TimeGrid(steps=steps, mode="explicit", c=float("nan"))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward corruption: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.

    t may be a scalar or one level per row of x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    ab = schedule.alpha_bar(t)
    if np.any(np.asarray(t) < 0):
        raise ScheduleError("q_sample requires t in [0, T-1]")
    ab = np.asarray(ab)
    if ab.ndim == 1 and x0.ndim == 2:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def dump_schedule_rows(schedule: NoiseSchedule):
    """Rows (t, beta, alpha, alpha_bar, variance) for the CSV dump."""
    for t in range(schedule.T):
        yield (
            t,
            schedule.betas[t],
            schedule.alphas[t],
            schedule.alpha_bars[t],
            schedule.variances[t],
        )
