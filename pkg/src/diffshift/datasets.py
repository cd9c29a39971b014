"""Toy data generators: Gaussians, mixtures, swiss roll, and a
heterogeneous-variance set used by the variance-density diagnostic."""

import math

import numpy as np

from .denoisers import GaussianMoments, validate_mixture


def gaussian_components(mean, variance, d: int | None = None):
    """Single-Gaussian 'mixture' from scalar or vector moments."""
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    if d is not None and mean.size == 1:
        mean = np.full(d, mean.item())
    return [GaussianMoments(mean=mean, variance=np.broadcast_to(
        np.asarray(variance, dtype=np.float64), mean.shape).copy(), weight=1.0)]


def gmm_components(means, variances, weights=None):
    means = [np.atleast_1d(np.asarray(m, dtype=np.float64)) for m in means]
    k = len(means)
    if weights is None:
        weights = [1.0 / k] * k
    comps = []
    for m, v, w in zip(means, np.broadcast_to(variances, (k,) + means[0].shape), weights):
        comps.append(GaussianMoments(mean=m, variance=np.asarray(v, dtype=np.float64),
                                     weight=float(w)))
    validate_mixture(comps)
    return comps


def four_mode_gmm(scale: float = 1.0, variance: float = 1.0, d: int = 2):
    """Equal-weight mixture with modes at (+-scale, ..., +-scale)."""
    signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    means = [np.array(s[:2] * (d // 2) + s[: d % 2], dtype=np.float64) * scale
             for s in signs]
    return gmm_components(means, variance)


def sample_mixture(components, n: int, rng: np.random.Generator) -> np.ndarray:
    validate_mixture(components)
    d = components[0].d
    weights = np.array([c.weight for c in components])
    choice = rng.choice(len(components), size=n, p=weights)
    out = np.empty((n, d))
    for k, c in enumerate(components):
        mask = choice == k
        m = int(mask.sum())
        if m:
            out[mask] = c.mean + np.sqrt(c.variance) * rng.standard_normal((m, d))
    return out


def swiss_roll(n: int, rng: np.random.Generator, noise: float = 0.05,
               scale: float = 0.25) -> np.ndarray:
    """2-D spiral, centered and shrunk to roughly unit scale."""
    theta = 1.5 * math.pi * (1.0 + 2.0 * rng.random(n))
    x = np.stack([theta * np.cos(theta), theta * np.sin(theta)], axis=1)
    x = scale * x + noise * rng.standard_normal((n, 2))
    return x - x.mean(axis=0)


def heterogeneous_rows(n: int, d: int, rng: np.random.Generator,
                       var_lo: float = 0.1, var_hi: float = 0.8) -> np.ndarray:
    """Rows with per-row coordinate variance spread uniformly in [var_lo, var_hi]."""
    scales = np.sqrt(rng.uniform(var_lo, var_hi, size=n))
    return scales[:, None] * rng.standard_normal((n, d))


def make_dataset(spec: dict, rng: np.random.Generator):
    """Build (samples, components-or-None) from a config dictionary.

    spec keys: kind in {gaussian, gmm, swiss-roll}; size; d; plus moments
    (mean/variance for gaussian, scale/variance for the 4-mode gmm).
    """
    kind = spec.get("kind", "gaussian")
    n = int(spec.get("size", 2000))
    d = int(spec.get("d", 2))
    if kind == "gaussian":
        comps = gaussian_components(spec.get("mean", 0.0), spec.get("variance", 1.0), d=d)
        return sample_mixture(comps, n, rng), comps
    if kind == "gmm":
        comps = four_mode_gmm(scale=float(spec.get("scale", 1.0)),
                              variance=float(spec.get("variance", 1.0)), d=d)
        return sample_mixture(comps, n, rng), comps
    if kind == "swiss-roll":
        return swiss_roll(n, rng, noise=float(spec.get("noise", 0.05))), None
    raise ValueError(f"unknown dataset kind {kind!r}")
