"""Figure renderers for the report outputs.

Every function takes already-computed data plus a target path and writes a
PNG; nothing here recomputes experiments.  The Agg backend is forced so
rendering works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def schedule_figure(schedule, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    t = np.arange(schedule.T)
    ax.plot(t, schedule.alpha_bars, label="alpha_bar")
    ax.plot(t, schedule.variances, label="1 - alpha_bar")
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("noise schedule")
    _save(fig, path)


def loss_figure(losses, path, smooth_width: int = 100):
    fig, ax = plt.subplots(figsize=(6, 4))
    losses = np.asarray(losses)
    ax.plot(losses, alpha=0.3, label="loss")
    if len(losses) > smooth_width:
        kernel = np.ones(smooth_width) / smooth_width
        ax.plot(np.arange(smooth_width - 1, len(losses)),
                np.convolve(losses, kernel, mode="valid"),
                label=f"moving avg ({smooth_width})")
    ax.set_xlabel("step")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss")
    _save(fig, path)


def samples_figure(data, path, reference=None):
    """Scatter of the first two coordinates (1-D data gets a histogram)."""
    data = np.atleast_2d(np.asarray(data))
    fig, ax = plt.subplots(figsize=(5, 5))
    if data.shape[1] == 1:
        ax.hist(data[:, 0], bins=50, density=True, alpha=0.7, label="generated")
        if reference is not None:
            ax.hist(np.asarray(reference)[:, 0], bins=50, density=True,
                    alpha=0.4, label="reference")
    else:
        if reference is not None:
            ref = np.atleast_2d(np.asarray(reference))
            ax.scatter(ref[:, 0], ref[:, 1], s=4, alpha=0.3, label="reference")
        ax.scatter(data[:, 0], data[:, 1], s=4, alpha=0.5, label="generated")
    ax.legend()
    ax.set_title("samples")
    _save(fig, path)


def variance_density_figure(table, path):
    """Quantile fan of intra-sample variance across timesteps."""
    stats = {}
    for exp, t, s, v in table.records:
        if exp == "variance_density" and s.startswith("q"):
            stats.setdefault(t, {})[float(s[1:])] = v
    ts = sorted(stats)
    fig, ax = plt.subplots(figsize=(6, 4))
    levels = sorted({q for row in stats.values() for q in row})
    median = [stats[t].get(0.5, np.nan) for t in ts]
    ax.plot(ts, median, color="k", label="median")
    for lo, hi in [(0.1, 0.9), (0.25, 0.75)]:
        if lo in levels and hi in levels:
            ax.fill_between(ts, [stats[t][lo] for t in ts],
                            [stats[t][hi] for t in ts], alpha=0.25,
                            label=f"q{lo:g}-q{hi:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("intra-sample variance")
    ax.legend()
    ax.set_title("variance density")
    _save(fig, path)


def mse_figure(table, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for stage in ("stage1", "stage2"):
        curve = table.values("mse", stage)
        if curve:
            ts = sorted(curve)
            ax.plot(ts, [curve[t] for t in ts], marker="o", label=stage)
    split = table.values("meta", "t_split")
    for t in split:
        ax.axvline(t, color="gray", linestyle="--", alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("backward MSE by step")
    _save(fig, path)


def coupling_figure(report, path):
    steps = report.steps()
    offsets = sorted({c.offset for c in report.cells})
    grid = np.full((len(steps), len(offsets)), np.nan)
    for c in report.cells:
        grid[steps.index(c.t), offsets.index(c.offset)] = c.mean_c
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, aspect="auto", origin="upper",
                   extent=(offsets[0] - 0.5, offsets[-1] + 0.5, len(steps) - 0.5, -0.5))
    ax.set_yticks(range(len(steps)), [str(t) for t in steps])
    ax.set_xlabel("probe offset")
    ax.set_ylabel("step t")
    fig.colorbar(im, ax=ax, label="mean coupling")
    ax.set_title("coupling by probe offset")
    _save(fig, path)


def sweep_figure(rows, path, metric="sliced_w"):
    """Heatmap of a sweep metric over (window, cutoff) cells.

    rows: iterable of dicts with keys window, cutoff and the metric.
    """
    rows = list(rows)
    windows = sorted({r["window"] for r in rows})
    cutoffs = sorted({r["cutoff"] for r in rows})
    grid = np.full((len(windows), len(cutoffs)), np.nan)
    for r in rows:
        grid[windows.index(r["window"]), cutoffs.index(r["cutoff"])] = r[metric]
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, aspect="auto", origin="lower")
    ax.set_xticks(range(len(cutoffs)), [str(c) for c in cutoffs])
    ax.set_yticks(range(len(windows)), [str(w) for w in windows])
    ax.set_xlabel("cutoff")
    ax.set_ylabel("window")
    fig.colorbar(im, ax=ax, label=metric)
    ax.set_title("shift parameter sweep")
    _save(fig, path)
