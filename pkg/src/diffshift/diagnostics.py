"""Empirical analyses at toy scale: intra-sample variance densities across
the forward process, two-stage backward MSE curves, forward/backward state
couplings over probe offsets, and distribution distances (sliced Wasserstein
plus exact-moment errors, the desk-scale stand-ins for feature-net metrics).
"""

from dataclasses import dataclass, field

import numpy as np

from .denoisers import mixture_moments, validate_mixture
from .samplers import SamplerError, ddim_step, intra_variances
from .schedule import NoiseSchedule, TimeGrid, q_sample

DEFAULT_QUANTILES = tuple(np.round(np.arange(0.05, 0.96, 0.05), 2))
DEFAULT_PROBE_OFFSETS = tuple(range(-6, 5))


@dataclass
class DiagnosticsTable:
    """Append-only long-form records: (experiment, t, statistic, value)."""

    records: list = field(default_factory=list)

    def add(self, experiment: str, t, stat: str, value: float):
        self.records.append((experiment, t, stat, float(value)))

    def values(self, experiment: str, stat: str) -> dict:
        """t -> value map for one (experiment, statistic) pair."""
        return {t: v for exp, t, s, v in self.records
                if exp == experiment and s == stat}

    def stats_at(self, experiment: str, t) -> dict:
        return {s: v for exp, rt, s, v in self.records
                if exp == experiment and rt == t}


@dataclass(frozen=True)
class CouplingCell:
    t: int
    offset: int
    mean_c: float
    mean_dist: float
    is_diagonal: bool


@dataclass
class CouplingReport:
    """Mean coupling C = exp(-dis) and mean distance per (step, probe offset)."""

    cells: list = field(default_factory=list)
    n_samples: int = 0

    def at(self, t: int, offset: int) -> CouplingCell:
        for c in self.cells:
            if c.t == t and c.offset == offset:
                return c
        raise KeyError((t, offset))

    def steps(self):
        return sorted({c.t for c in self.cells}, reverse=True)

    def better_than_diagonal(self):
        """(t, offset) pairs whose mean coupling beats the step's diagonal."""
        out = []
        for t in self.steps():
            row = [c for c in self.cells if c.t == t]
            diag = [c for c in row if c.is_diagonal]
            if not diag:
                continue
            out.extend((c.t, c.offset) for c in row
                       if not c.is_diagonal and c.mean_c > diag[0].mean_c)
        return out


def variance_density(dataset: np.ndarray, timesteps, schedule: NoiseSchedule,
                     rng: np.random.Generator, n: int | None = None,
                     quantile_levels=DEFAULT_QUANTILES) -> DiagnosticsTable:
    """Quantiles of per-sample intra variance of x_t at each requested t.

    t = -1 records the uncorrupted data itself.
    """
    x0 = np.asarray(dataset, dtype=np.float64)
    if n is not None:
        x0 = x0[:n]
    if x0.ndim != 2 or len(x0) < 100:
        raise ValueError("need a (N, d) dataset with N >= 100")
    table = DiagnosticsTable()
    for t in timesteps:
        t = int(t)
        if t < 0:
            x_t = x0
        else:
            x_t = q_sample(x0, t, rng.standard_normal(x0.shape), schedule)
        v = intra_variances(x_t)
        for q in quantile_levels:
            table.add("variance_density", t, f"q{q:g}", np.quantile(v, q))
        table.add("variance_density", t, "mean", v.mean())
    return table


def inter_decile_width(table: DiagnosticsTable, t: int) -> float:
    stats = table.stats_at("variance_density", t)
    return stats["q0.9"] - stats["q0.1"]


def _deterministic_transfer(model, x, t, t_prev, schedule):
    eps_hat = model.predict(x, t)
    return ddim_step(x, t, t_prev, eps_hat, schedule, eta=0.0)


def mse_by_step(model, dataset: np.ndarray, grid: TimeGrid, t_split: int,
                schedule: NoiseSchedule, rng: np.random.Generator,
                eta: float = 0.0) -> DiagnosticsTable:
    """Two-stage backward MSE against matched forward states.

    Stage 1 starts at the top grid level from the forward state and records
    MSE at every arrival level >= t_split; stage 2 restarts from the matched
    forward state at the lowest grid level >= t_split and records MSE at
    every arrival level below the split.  Shared forward noise makes the
    ground-truth states exactly invertible for a perfect deterministic
    denoiser.
    """
    if eta != 0.0:
        raise SamplerError("MSE-by-step requires the deterministic sampler (eta = 0)")
    x0 = np.asarray(dataset, dtype=np.float64)
    eps = rng.standard_normal(x0.shape)
    steps = [int(s) for s in grid.descending]
    table = DiagnosticsTable()
    table.add("meta", t_split, "t_split", t_split)

    def forward(t):
        return q_sample(x0, t, eps, schedule)

    # stage 1: from the top, compare while still at or above the split
    x = forward(steps[0])
    for i in range(len(steps) - 1):
        t, t_prev = steps[i], steps[i + 1]
        if t_prev < t_split:
            break
        x = _deterministic_transfer(model, x, t, t_prev, schedule)
        table.add("mse", t_prev, "stage1", np.mean((x - forward(t_prev)) ** 2))

    # stage 2: restart from the matched state at the split
    start_idx = 0
    for i, s in enumerate(steps):
        if s >= t_split:
            start_idx = i
    x = forward(steps[start_idx])
    for i in range(start_idx, len(steps) - 1):
        t, t_prev = steps[i], steps[i + 1]
        x = _deterministic_transfer(model, x, t, t_prev, schedule)
        if t_prev < t_split:
            table.add("mse", t_prev, "stage2", np.mean((x - forward(t_prev)) ** 2))
    return table


def coupling_matrix(model, dataset: np.ndarray, grid: TimeGrid,
                    schedule: NoiseSchedule, rng: np.random.Generator,
                    offsets=DEFAULT_PROBE_OFFSETS,
                    per_sample: bool = True) -> CouplingReport:
    """Coupling of backward states against forward ground truth at probe levels.

    After the deterministic transfer t -> t_prev the state is compared with
    forward states at tau = t + offset for each probe offset; the offset
    landing exactly on t_prev is the diagonal.  Per-sample mode exponentiates
    each sample's distance before averaging; batch-mean mode exponentiates
    the mean distance.
    """
    x0 = np.asarray(dataset, dtype=np.float64)
    eps = rng.standard_normal(x0.shape)
    steps = [int(s) for s in grid.descending]
    report = CouplingReport(n_samples=len(x0))
    x = q_sample(x0, steps[0], eps, schedule)
    for i in range(len(steps) - 1):
        t, t_prev = steps[i], steps[i + 1]
        x = _deterministic_transfer(model, x, t, t_prev, schedule)
        for off in offsets:
            tau = t + int(off)
            if not (0 <= tau < schedule.T):
                continue
            truth = q_sample(x0, tau, eps, schedule)
            dist = np.linalg.norm(x - truth, axis=1)
            mean_dist = float(dist.mean())
            mean_c = float(np.mean(np.exp(-dist))) if per_sample else float(np.exp(-mean_dist))
            report.cells.append(CouplingCell(
                t=t, offset=int(off), mean_c=mean_c, mean_dist=mean_dist,
                is_diagonal=(tau == t_prev),
            ))
    return report


def _as_array(batch) -> np.ndarray:
    data = getattr(batch, "data", batch)
    return np.atleast_2d(np.asarray(data, dtype=np.float64))


def sliced_wasserstein(a, b, n_proj: int = 128,
                       rng: np.random.Generator | None = None) -> float:
    """Mean 1-D Wasserstein-2 distance over random unit projections."""
    xa, xb = _as_array(a), _as_array(b)
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    if n_proj < 32:
        raise ValueError("need n_proj >= 32")
    if rng is None:
        rng = np.random.default_rng(0)
    d = xa.shape[1]
    dirs = rng.standard_normal((n_proj, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = xa @ dirs.T
    pb = xb @ dirs.T
    m = max(len(xa), len(xb))
    q = (np.arange(m) + 0.5) / m
    total = 0.0
    for j in range(n_proj):
        if len(xa) == len(xb):
            qa, qb = np.sort(pa[:, j]), np.sort(pb[:, j])
        else:
            qa = np.quantile(pa[:, j], q)
            qb = np.quantile(pb[:, j], q)
        total += np.sqrt(np.mean((qa - qb) ** 2))
    return float(total / n_proj)


def moment_error(samples: np.ndarray, components) -> DiagnosticsTable:
    """Error of empirical mean and covariance against exact mixture moments."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("samples must be nonempty")
    validate_mixture(components)
    mean_ref, cov_ref = mixture_moments(components)
    mean_err = float(np.linalg.norm(x.mean(axis=0) - mean_ref))
    if len(x) > 1:
        cov_emp = np.cov(x, rowvar=False, ddof=1)
    else:
        cov_emp = np.zeros((x.shape[1], x.shape[1]))
    cov_emp = np.atleast_2d(cov_emp)
    cov_err = float(np.linalg.norm(cov_emp - cov_ref))
    table = DiagnosticsTable()
    table.add("moments", -1, "mean_error", mean_err)
    table.add("moments", -1, "cov_error", cov_err)
    return table
