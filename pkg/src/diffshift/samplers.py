"""Backward samplers: stochastic ancestral steps, deterministic DDIM steps,
and pseudo-numerical multistep solvers, plus the shared trajectory runner.

All steps are written for subsampled grids: the pair (t, t_prev) defines an
effective transition whose (alpha, alpha_bar) are recomputed from the ratio
of the ladder values, so forward-kernel marginals stay consistent no matter
how coarse the grid is.  t_prev = -1 denotes the final transfer to clean
data (alpha_bar = 1).

`t` and `t_prev` may be scalars or per-chain integer arrays; per-chain
values appear when the time-shift selector runs in per-chain mode.
"""

from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule, TimeGrid

METHODS = ("ddpm", "ddim", "s-pndm", "f-pndm")


class SamplerError(ValueError):
    """Invalid sampler configuration or contract violation."""


class DivergedSampleError(RuntimeError):
    """Non-finite state encountered during sampling."""

    def __init__(self, t, message="non-finite state"):
        super().__init__(f"{message} at timestep {t}")
        self.timestep = t


@dataclass(frozen=True)
class SamplerConfig:
    method: str
    grid: TimeGrid
    dim: int
    n_chains: int = 1
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise SamplerError(f"unknown method {self.method!r}; known: {METHODS}")
        if self.eta < 0:
            raise SamplerError("eta must be >= 0")
        if self.n_chains < 1 or self.dim < 1:
            raise SamplerError("need n_chains >= 1 and dim >= 1")


@dataclass(frozen=True)
class SampleBatch:
    """N x d states plus the diffusion level they currently represent."""

    data: np.ndarray
    timestep: object  # integer level, or "data" for clean samples

    @property
    def d(self) -> int:
        return self.data.shape[-1]

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class PosteriorParams:
    """Backward-kernel parameters for the effective transition t -> t_prev."""

    coef_x0: np.ndarray
    coef_xt: np.ndarray
    beta_tilde: np.ndarray


@dataclass
class StepRecord:
    index: int
    t_nominal: int
    t_used: object  # int, or per-chain array in per-chain shift mode
    t_prev: int
    state_norm: float
    intra_variance: float
    shift: object = None  # ShiftEvent for the *next* iteration, if any
    order_warning: bool = False


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    final: SampleBatch | None = None


def _bars(schedule, t, t_prev, ndim):
    ab_t = np.asarray(schedule.alpha_bar(t), dtype=np.float64)
    ab_p = np.asarray(schedule.alpha_bar(t_prev), dtype=np.float64)
    if ndim == 2:
        if ab_t.ndim == 1:
            ab_t = ab_t[:, None]
        if ab_p.ndim == 1:
            ab_p = ab_p[:, None]
    return ab_t, ab_p


def posterior_params(schedule: NoiseSchedule, t, t_prev) -> PosteriorParams:
    ab_t, ab_p = _bars(schedule, t, t_prev, 1)
    alpha_eff = ab_t / ab_p
    beta_eff = 1.0 - alpha_eff
    denom = 1.0 - ab_t
    return PosteriorParams(
        coef_x0=np.sqrt(ab_p) * beta_eff / denom,
        coef_xt=np.sqrt(alpha_eff) * (1.0 - ab_p) / denom,
        beta_tilde=(1.0 - ab_p) / denom * beta_eff,
    )


def ddpm_step(x_t, t, t_prev, eps_hat, z, schedule: NoiseSchedule) -> np.ndarray:
    """One stochastic ancestral step using effective (alpha, alpha_bar)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab_t, ab_p = _bars(schedule, t, t_prev, x_t.ndim)
    alpha_eff = ab_t / ab_p
    beta_eff = 1.0 - alpha_eff
    sigma2 = (1.0 - ab_p) / (1.0 - ab_t) * beta_eff
    sigma2 = np.maximum(sigma2, 0.0)  # t_used below t_prev flips the sign
    final = np.all(np.asarray(t_prev) < 0) if np.ndim(t_prev) else t_prev < 0
    if final and z is not None and np.any(np.asarray(z) != 0):
        raise SamplerError("final transfer to data requires z = 0")
    mean = (x_t - beta_eff / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(alpha_eff)
    if z is None or np.all(sigma2 == 0):
        return mean
    return mean + np.sqrt(sigma2) * z


def ddim_step(x_t, t, t_prev, eps_hat, schedule: NoiseSchedule,
              eta: float = 0.0, z=None) -> np.ndarray:
    """x0-prediction then re-noising at the target level; eta = 0 is deterministic."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab_t, ab_p = _bars(schedule, t, t_prev, x_t.ndim)
    if np.any(ab_t <= 0):
        raise SamplerError("alpha_bar(t) must be positive")
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    if eta == 0.0:
        return np.sqrt(ab_p) * x0_hat + np.sqrt(np.maximum(1.0 - ab_p, 0.0)) * eps_hat
    sigma2 = (eta**2) * (1.0 - ab_p) / (1.0 - ab_t) * np.maximum(1.0 - ab_t / ab_p, 0.0)
    dir_coef = np.sqrt(np.maximum(1.0 - ab_p - sigma2, 0.0))
    out = np.sqrt(ab_p) * x0_hat + dir_coef * eps_hat
    if z is not None:
        out = out + np.sqrt(sigma2) * z
    return out


def _transfer(x, eps, t, t_prev, schedule):
    return ddim_step(x, t, t_prev, eps, schedule, eta=0.0)


def multistep_epsilon(order: int, history) -> np.ndarray:
    """Adams-Bashforth combination of stored eps evaluations (newest last)."""
    if order == 2:
        if len(history) < 2:
            raise SamplerError("order-2 combination needs 2 stored evaluations")
        return (3.0 * history[-1] - history[-2]) / 2.0
    if order == 4:
        if len(history) < 4:
            raise SamplerError("order-4 combination needs 4 stored evaluations")
        return (
            55.0 * history[-1]
            - 59.0 * history[-2]
            + 37.0 * history[-3]
            - 9.0 * history[-4]
        ) / 24.0
    raise SamplerError(f"unsupported multistep order {order}")


def pndm_step(order: int, history: list, x_t, t, t_prev, model,
              schedule: NoiseSchedule):
    """One pseudo-numerical step; mutates and returns the eps history.

    Warm-up (insufficient history) uses pseudo Runge-Kutta substeps: a
    midpoint RK4 pass for order 4, an improved-Euler pass for order 2.
    Outside warm-up the stored evaluations are combined with the classic
    Adams-Bashforth weights and pushed through the deterministic transfer.
    """
    e_t = model.predict(x_t, t)
    history.append(e_t)
    if len(history) > 4:
        del history[0]
    need = 2 if order == 2 else 4
    final = np.all(np.asarray(t_prev) < 0)
    if len(history) >= need:
        eps_use = multistep_epsilon(order, history)
    elif final:
        eps_use = e_t  # degenerate grid: nothing to warm up against
    elif order == 2:
        x_pred = _transfer(x_t, e_t, t, t_prev, schedule)
        e_next = model.predict(x_pred, t_prev)
        eps_use = 0.5 * (e_t + e_next)
    else:
        t_mid = (np.asarray(t) + np.asarray(t_prev)) // 2
        x1 = _transfer(x_t, e_t, t, t_mid, schedule)
        e2 = model.predict(x1, t_mid)
        x2 = _transfer(x_t, e2, t, t_mid, schedule)
        e3 = model.predict(x2, t_mid)
        x3 = _transfer(x_t, e3, t, t_prev, schedule)
        e4 = model.predict(x3, t_prev)
        eps_use = (e_t + 2.0 * e2 + 2.0 * e3 + e4) / 6.0
    return _transfer(x_t, eps_use, t, t_prev, schedule), history


def intra_variances(x: np.ndarray) -> np.ndarray:
    """Unbiased per-row variance over coordinates (the flattened-sample variance)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] < 2:
        raise ValueError("per-sample variance needs dimension >= 2")
    return x.var(axis=1, ddof=1)


def run_sampler(config: SamplerConfig, model, schedule: NoiseSchedule,
                rng: np.random.Generator, shift=None,
                final_step_to_data: bool = True):
    """Run a backward chain from standard normal down the grid.

    `shift` is an optional time-shift configuration (see `timeshift`); when
    given, each iteration's model/transfer timestep may be replaced by the
    variance-matched selection recorded in the trajectory.  With shift
    disabled (None, zero window, or cutoff >= T) the chain is bitwise
    identical to the unshifted sampler.
    """
    from .timeshift import apply_shift_selection  # local: avoids import cycle

    if np.any(config.grid.steps >= schedule.T):
        raise SamplerError("grid does not fit the schedule")
    steps = [int(s) for s in config.grid.descending]
    x = rng.standard_normal((config.n_chains, config.dim))
    history: list = []
    trajectory = Trajectory()
    t_use_next = None
    n_transfers = len(steps) if final_step_to_data else len(steps) - 1
    for i in range(n_transfers):
        t_nom = steps[i]
        t_prev = steps[i + 1] if i + 1 < len(steps) else -1
        t_use = t_use_next if t_use_next is not None else t_nom
        if config.method == "ddpm":
            z = rng.standard_normal(x.shape) if t_prev >= 0 else None
            eps_hat = model.predict(x, t_use)
            x = ddpm_step(x, t_use, t_prev, eps_hat, z, schedule)
        elif config.method == "ddim":
            z = rng.standard_normal(x.shape) if config.eta > 0 and t_prev >= 0 else None
            eps_hat = model.predict(x, t_use)
            x = ddim_step(x, t_use, t_prev, eps_hat, schedule, eta=config.eta, z=z)
        else:
            order = 2 if config.method == "s-pndm" else 4
            x, history = pndm_step(order, history, x, t_use, t_prev, model, schedule)
        if not np.all(np.isfinite(x)):
            raise DivergedSampleError(t_nom)
        record = StepRecord(
            index=i,
            t_nominal=t_nom,
            t_used=t_use,
            t_prev=t_prev,
            state_norm=float(np.mean(np.linalg.norm(x, axis=1))),
            intra_variance=float(np.mean(intra_variances(x))) if config.dim >= 2 else float("nan"),
        )
        t_use_next = None
        if i + 1 < n_transfers:
            center = steps[i + 1]
            event = apply_shift_selection(shift, x, center, schedule)
            if event is not None:
                record.shift = event
                if event.t_s is not None:
                    t_use_next = event.t_s
            if t_use_next is not None and np.any(np.asarray(t_use_next) <= (steps[i + 2] if i + 2 < len(steps) else -1)):
                record.order_warning = True
        trajectory.records.append(record)
    level = "data" if final_step_to_data else steps[-1]
    batch = SampleBatch(data=x, timestep=level)
    trajectory.final = batch
    return batch, trajectory
