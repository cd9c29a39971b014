"""Variance-matched time-step shifting.

At each backward iteration the freshly produced state is relabelled: its
intra-sample variance is compared against the schedule ladder inside a
window around the upcoming nominal timestep, and the best-matching level
is fed to the next iteration (model input and transfer quantities alike).
Below a cutoff timestep the relabelling is disabled, because near t = 0
the schedule variances of neighbouring steps become indistinguishable from
the data's own spread.
"""

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule
from .samplers import SamplerConfig, intra_variances, run_sampler

# Full-width window presets by step count, with a mid-range cutoff.
WINDOW_PRESETS = {10: 40, 20: 30, 50: 8, 100: 2}
DEFAULT_CUTOFF = 300


class ShiftError(ValueError):
    """Invalid shift configuration."""


@dataclass(frozen=True)
class ShiftConfig:
    """window: full width (even, >= 0); cutoff: no shifting at or below it."""

    window: int
    cutoff: int
    per_chain: bool = False

    def __post_init__(self):
        if self.window < 0 or self.window % 2 != 0:
            raise ShiftError("window must be an even integer >= 0")
        if self.cutoff < 0:
            raise ShiftError("cutoff must be >= 0")


def preset_shift(n_steps: int, cutoff: int = DEFAULT_CUTOFF) -> ShiftConfig:
    """Window preset for a given step count (nearest key wins)."""
    key = min(WINDOW_PRESETS, key=lambda k: abs(k - n_steps))
    return ShiftConfig(window=WINDOW_PRESETS[key], cutoff=cutoff)


@dataclass(frozen=True)
class ShiftEvent:
    """Record of one selection: window center t, measured variance, choice."""

    t: int
    variance: object  # float, or per-chain array in per-chain mode
    window_lo: int
    window_hi: int
    t_s: object  # int, per-chain array, or None below the cutoff


def intra_sample_variance(x) -> float:
    """Unbiased variance of one flattened sample over its coordinates."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("per-sample variance needs dimension >= 2")
    return float(x.var(ddof=1))


def window_bounds_for(t: int, window: int, T: int):
    lo = max(0, t - window // 2)
    hi = min(T - 1, t + window // 2)
    return lo, hi


def select_shifted_timestep(variance, t: int, config: ShiftConfig,
                            schedule: NoiseSchedule):
    """argmin over the clamped window of |variance - (1 - alpha_bar)|.

    Ties break toward the candidate nearest t - 1, then toward the smaller
    candidate.  `variance` may be a scalar or a per-chain vector.
    """
    lo, hi = window_bounds_for(t, config.window, schedule.T)
    if hi < lo:
        raise ShiftError("empty candidate window")
    taus = np.arange(lo, hi + 1)
    ladder = schedule.variances[taus]
    v = np.atleast_1d(np.asarray(variance, dtype=np.float64))
    diffs = np.abs(v[:, None] - ladder[None, :])
    proximity = np.abs(taus - (t - 1))
    picks = np.empty(len(v), dtype=np.int64)
    for r in range(len(v)):
        order = np.lexsort((taus, proximity, diffs[r]))
        picks[r] = taus[order[0]]
    if np.isscalar(variance) or np.ndim(variance) == 0:
        return int(picks[0])
    return picks


def apply_shift_selection(shift, x_new: np.ndarray, center: int,
                          schedule: NoiseSchedule):
    """Selection hook called by the trajectory runner after each transfer.

    Returns a ShiftEvent for the iteration whose nominal timestep is
    `center`, or None when shifting is disabled entirely.
    """
    if shift is None:
        return None
    lo, hi = window_bounds_for(center, shift.window, schedule.T)
    if center <= shift.cutoff or shift.window == 0:
        return ShiftEvent(t=center, variance=None, window_lo=lo, window_hi=hi, t_s=None)
    variances = intra_variances(x_new)
    v = variances if shift.per_chain else float(np.mean(variances))
    t_s = select_shifted_timestep(v, center, shift, schedule)
    return ShiftEvent(t=center, variance=v, window_lo=lo, window_hi=hi, t_s=t_s)


def run_time_shift_sampler(config: SamplerConfig, shift: ShiftConfig, model,
                           schedule: NoiseSchedule, rng: np.random.Generator,
                           final_step_to_data: bool = True):
    """Time-shift wrapped sampling: any base method plus the selection loop.

    Degenerate settings (window = 0 or cutoff >= T) reproduce the base
    sampler bit for bit, since selection then never changes a timestep and
    never consumes randomness.
    """
    return run_sampler(config, model, schedule, rng, shift=shift,
                       final_step_to_data=final_step_to_data)
