"""diffshift: diffusion samplers with variance-matched time-step shifting.

A self-contained numpy implementation of the DDPM/DDIM/PNDM sampler family,
a training-free time-shift wrapper that relabels each intermediate state by
matching its intra-sample variance to the noise-schedule ladder, analytic
Bayes-optimal denoisers for Gaussian-mixture data, controlled error
injection, and the diagnostics used to study exposure bias at toy scale.
"""

__version__ = "0.1.0"

from .schedule import (NoiseSchedule, TimeGrid, build_schedule, q_sample,
                       select_time_grid)
from .denoisers import (AnalyticGaussianDenoiser, GaussianMoments, MLPDenoiser,
                        PerturbationSpec, PerturbedDenoiser, load_checkpoint,
                        save_checkpoint)
from .samplers import (METHODS, SampleBatch, SamplerConfig, Trajectory,
                       run_sampler)
from .timeshift import (DEFAULT_CUTOFF, WINDOW_PRESETS, ShiftConfig,
                        preset_shift, run_time_shift_sampler,
                        select_shifted_timestep)
from .training import TrainConfig, train
from .theory import (TheoremProbe, WindowBoundQuery, kl_objective,
                     optimal_shift_variance, window_bounds)
from .diagnostics import (coupling_matrix, moment_error, mse_by_step,
                          sliced_wasserstein, variance_density)

__all__ = [
    "__version__",
    "NoiseSchedule", "TimeGrid", "build_schedule", "q_sample", "select_time_grid",
    "AnalyticGaussianDenoiser", "GaussianMoments", "MLPDenoiser",
    "PerturbationSpec", "PerturbedDenoiser", "load_checkpoint", "save_checkpoint",
    "METHODS", "SampleBatch", "SamplerConfig", "Trajectory", "run_sampler",
    "DEFAULT_CUTOFF", "WINDOW_PRESETS", "ShiftConfig", "preset_shift",
    "run_time_shift_sampler", "select_shifted_timestep",
    "TrainConfig", "train",
    "TheoremProbe", "WindowBoundQuery", "kl_objective",
    "optimal_shift_variance", "window_bounds",
    "coupling_matrix", "moment_error", "mse_by_step",
    "sliced_wasserstein", "variance_density",
]
