"""Epsilon predictors.

Three families behind one `predict(x, t)` surface:

* AnalyticGaussianDenoiser -- exact Bayes-optimal predictor for diagonal
  Gaussian (mixture) data; the verification oracle everything else is
  measured against.
* MLPDenoiser -- small trainable network (plain numpy, manual backprop).
* PerturbedDenoiser -- wraps any predictor and injects a controlled,
  reproducible Gaussian error so that the induced one-step state error has
  a prescribed standard deviation.

`t` may be a scalar or a per-row integer array; outputs always match the
shape of `x`.
"""

import base64
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule, TimeGrid, build_schedule

CHECKPOINT_SCHEMA_VERSION = 1


class ModelError(ValueError):
    """Invalid model parameters or out-of-domain query."""


# ---------------------------------------------------------------------------
# analytic (Bayes-optimal) denoiser


@dataclass(frozen=True)
class GaussianMoments:
    """Diagonal-Gaussian component: per-coordinate mean/variance plus weight."""

    mean: np.ndarray
    variance: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        v = np.atleast_1d(np.asarray(self.variance, dtype=np.float64))
        if v.shape != m.shape:
            if v.size == 1:
                v = np.full_like(m, float(v[0]))
            else:
                raise ModelError("mean/variance shape mismatch")
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(v)):
            raise ModelError("non-finite component moments")
        if np.any(v <= 0):
            raise ModelError("component variances must be positive")
        if not np.isfinite(self.weight) or self.weight < 0 or self.weight > 1:
            raise ModelError("component weight must be in [0, 1]")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "variance", v)

    @property
    def d(self) -> int:
        return len(self.mean)


def validate_mixture(components) -> None:
    if not components:
        raise ModelError("mixture needs at least one component")
    d = components[0].d
    if any(c.d != d for c in components):
        raise ModelError("mixture components disagree on dimension")
    total = sum(c.weight for c in components)
    if abs(total - 1.0) > 1e-9:
        raise ModelError(f"mixture weights sum to {total}, expected 1")


def mixture_moments(components):
    """Exact mean vector and covariance matrix of a diagonal-Gaussian mixture."""
    validate_mixture(components)
    d = components[0].d
    mean = np.zeros(d)
    second = np.zeros((d, d))
    for c in components:
        mean += c.weight * c.mean
        second += c.weight * (np.diag(c.variance) + np.outer(c.mean, c.mean))
    return mean, second - np.outer(mean, mean)


def posterior_mean_x0(components, x: np.ndarray, t, schedule: NoiseSchedule) -> np.ndarray:
    """Exact E[x0 | x_t] under the forward kernel, for diagonal GMM data."""
    validate_mixture(components)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ab = np.asarray(schedule.alpha_bar(t), dtype=np.float64)
    if np.any(ab <= 0.0) or np.any(ab >= 1.0):
        raise ModelError("alpha_bar must lie strictly inside (0, 1)")
    ab = ab[:, None] if ab.ndim == 1 else ab  # per-row levels
    # per-component marginal x_t | k ~ N(sqrt(ab) m_k, ab v_k + 1 - ab)
    log_resp = np.empty((len(components), x.shape[0]))
    comp_mean = np.empty((len(components),) + x.shape)
    for k, c in enumerate(components):
        s2 = ab * c.variance + (1.0 - ab)
        resid = x - np.sqrt(ab) * c.mean
        log_resp[k] = (
            math.log(c.weight) if c.weight > 0 else -np.inf
        ) - 0.5 * np.sum(resid**2 / s2 + np.log(s2), axis=-1)
        comp_mean[k] = (np.sqrt(ab) * c.variance * x + (1.0 - ab) * c.mean) / s2
    log_resp -= log_resp.max(axis=0, keepdims=True)
    resp = np.exp(log_resp)
    resp /= resp.sum(axis=0, keepdims=True)
    return np.einsum("kn,knd->nd", resp, comp_mean)


def analytic_epsilon(components, x: np.ndarray, t, schedule: NoiseSchedule) -> np.ndarray:
    """Bayes-optimal eps-hat = (x - sqrt(ab) E[x0|x]) / sqrt(1 - ab)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    ab = np.asarray(schedule.alpha_bar(t), dtype=np.float64)
    ex0 = posterior_mean_x0(components, x2, t, schedule)
    ab = ab[:, None] if ab.ndim == 1 else ab
    eps = (x2 - np.sqrt(ab) * ex0) / np.sqrt(1.0 - ab)
    return eps[0] if squeeze else eps


class AnalyticGaussianDenoiser:
    """Exact eps-predictor for diagonal Gaussian-mixture data."""

    def __init__(self, components, schedule: NoiseSchedule):
        validate_mixture(components)
        self.components = list(components)
        self.schedule = schedule
        self.variant = "analytic-gaussian" if len(self.components) == 1 else "analytic-gmm"

    @property
    def d(self) -> int:
        return self.components[0].d

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        return analytic_epsilon(self.components, x, t, self.schedule)

    def posterior_mean(self, x: np.ndarray, t) -> np.ndarray:
        return posterior_mean_x0(self.components, np.atleast_2d(x), t, self.schedule)


# ---------------------------------------------------------------------------
# trainable MLP


def time_embedding(t, dim: int, T: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (n, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class MLPDenoiser:
    """Fully-connected eps-predictor: 3 tanh hidden layers of width 128.

    The sinusoidal time embedding is concatenated to the input. Weights are
    plain float64 numpy arrays; gradients come from `backward`, which the
    trainer pairs with the cache returned by `forward`.
    """

    variant = "mlp"

    def __init__(self, d: int, schedule: NoiseSchedule, hidden=(128, 128, 128),
                 temb_dim: int = 32, rng: np.random.Generator | None = None):
        if d < 1:
            raise ModelError("input dimension must be >= 1")
        self.d = d
        self.schedule = schedule
        self.hidden = tuple(hidden)
        self.temb_dim = temb_dim
        rng = rng or np.random.default_rng(0)
        sizes = [d + temb_dim, *self.hidden, d]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def parameters(self):
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def forward(self, x: np.ndarray, t):
        """Return (eps_hat, cache); cache feeds `backward`."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        temb = time_embedding(np.broadcast_to(np.asarray(t), (x.shape[0],)),
                              self.temb_dim, self.schedule.T)
        a = np.concatenate([x, temb], axis=1)
        activations = [a]
        n_layers = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = np.tanh(z) if i < n_layers - 1 else z
            activations.append(a)
        return a, activations

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out, _ = self.forward(np.atleast_2d(x), t)
        return out[0] if x.ndim == 1 else out

    def backward(self, activations, grad_out: np.ndarray):
        """Gradients of a scalar loss w.r.t. every weight/bias.

        grad_out is dLoss/d(output), shape (n, d). Returns lists aligned
        with self.weights / self.biases.
        """
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = grad_out
        for i in reversed(range(len(self.weights))):
            a_in = activations[i]
            gW[i] = a_in.T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                # tanh'(z) expressed through the stored activation
                a_hidden = activations[i]
                delta = (delta @ self.weights[i].T) * (1.0 - a_hidden**2)
        return gW, gb


# ---------------------------------------------------------------------------
# controlled error injection


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-step state-error scales phi[t] >= 0 plus the stream seed."""

    phi: np.ndarray
    seed: int

    def __post_init__(self):
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        if np.any(phi < 0) or not np.all(np.isfinite(phi)):
            raise ModelError("phi must be finite and >= 0")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def constant(cls, phi: float, T: int, seed: int) -> "PerturbationSpec":
        return cls(phi=np.full(T, float(phi)), seed=seed)


class PerturbedDenoiser:
    """Adds a reproducible Gaussian error to an inner predictor.

    The draw is scaled so that the induced error on the *next state* has
    standard deviation phi[t].  "Next state" means the deterministic
    (eta = 0) transfer from t to the step below it on `grid` (one ladder
    step when grid is None; clean data below the lowest step).  Randomness
    comes from a counter-based stream keyed by the perturbation seed, so identical
    call sequences are bitwise reproducible.
    """

    variant = "perturbed"

    def __init__(self, inner, spec: PerturbationSpec, schedule: NoiseSchedule,
                 grid: TimeGrid | None = None):
        if len(spec.phi) != schedule.T:
            raise ModelError("phi length must equal schedule T")
        self.inner = inner
        self.spec = spec
        self.schedule = schedule
        self.grid = grid
        self._calls = 0

    def _t_below(self, t: np.ndarray) -> np.ndarray:
        """Largest step of the reference grid strictly below t, or -1."""
        if self.grid is None:
            return t - 1
        steps = self.grid.steps
        pos = np.searchsorted(steps, t, side="left") - 1
        return np.where(pos >= 0, steps[np.clip(pos, 0, len(steps) - 1)], -1)

    def state_gain(self, t) -> np.ndarray:
        """|d x_next / d eps_hat| for the reference transfer out of level t."""
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        ab_t = np.asarray(self.schedule.alpha_bar(t), dtype=np.float64)
        ab_p = np.asarray(self.schedule.alpha_bar(self._t_below(t)), dtype=np.float64)
        gain = np.abs(np.sqrt(1.0 - ab_p) - np.sqrt(ab_p / ab_t) * np.sqrt(1.0 - ab_t))
        if np.any(gain <= 0):
            raise ModelError("degenerate transfer: zero state gain")
        return gain

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        eps = self.inner.predict(x, t)
        tv = np.atleast_1d(np.asarray(t, dtype=np.int64))
        phi = self.spec.phi[tv]
        if not np.any(phi > 0):
            return eps
        scale = phi / self.state_gain(tv)
        bitgen = np.random.Philox(
            key=np.uint64(self.spec.seed),
            counter=np.array([self._calls, 0, 0, 0], dtype=np.uint64),
        )
        self._calls += 1
        noise = np.random.Generator(bitgen).standard_normal(x.shape)
        if x.ndim == 2 and scale.shape[0] == x.shape[0]:
            scale = scale[:, None]
        else:
            scale = scale.reshape(()) if scale.size == 1 else scale
        return eps + scale * noise

    def reset_stream(self):
        self._calls = 0


# ---------------------------------------------------------------------------
# checkpoint round-trip (versioned structured text, bit-exact)


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "dtype": "<f8",
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


def _model_payload(model) -> dict:
    if isinstance(model, AnalyticGaussianDenoiser):
        return {
            "components": [
                {
                    "mean": _encode_array(c.mean),
                    "variance": _encode_array(c.variance),
                    "weight": c.weight,
                }
                for c in model.components
            ]
        }
    if isinstance(model, MLPDenoiser):
        return {
            "d": model.d,
            "hidden": list(model.hidden),
            "temb_dim": model.temb_dim,
            "weights": [_encode_array(W) for W in model.weights],
            "biases": [_encode_array(b) for b in model.biases],
        }
    if isinstance(model, PerturbedDenoiser):
        return {
            "phi": _encode_array(model.spec.phi),
            "seed": model.spec.seed,
            "inner_variant": model.inner.variant,
            "inner": _model_payload(model.inner),
        }
    raise ModelError(f"cannot checkpoint model type {type(model).__name__}")


def save_checkpoint(model, path: str, extra: dict | None = None) -> None:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "variant": model.variant,
        "schedule_fingerprint": model.schedule.fingerprint(),
        "schedule": {
            "kind": "linear",
            "T": model.schedule.T,
            "beta_start": float(model.schedule.betas[0]),
            "beta_end": float(model.schedule.betas[-1]),
        },
        "payload": _model_payload(model),
    }
    if extra:
        doc["extra"] = extra
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _model_from_payload(variant: str, payload: dict, schedule: NoiseSchedule):
    if variant in ("analytic-gaussian", "analytic-gmm"):
        comps = [
            GaussianMoments(
                mean=_decode_array(c["mean"]),
                variance=_decode_array(c["variance"]),
                weight=c["weight"],
            )
            for c in payload["components"]
        ]
        return AnalyticGaussianDenoiser(comps, schedule)
    if variant == "mlp":
        model = MLPDenoiser(payload["d"], schedule, hidden=tuple(payload["hidden"]),
                            temb_dim=payload["temb_dim"])
        model.weights = [_decode_array(W) for W in payload["weights"]]
        model.biases = [_decode_array(b) for b in payload["biases"]]
        return model
    if variant == "perturbed":
        inner = _model_from_payload(payload["inner_variant"], payload["inner"], schedule)
        spec = PerturbationSpec(phi=_decode_array(payload["phi"]), seed=payload["seed"])
        return PerturbedDenoiser(inner, spec, schedule)
    raise ModelError(f"unknown checkpoint variant {variant!r}")


def load_checkpoint(path: str):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ModelError(f"unsupported checkpoint schema {doc.get('schema_version')}")
    sch = doc["schedule"]
    schedule = build_schedule(sch["kind"], sch["T"], sch["beta_start"], sch["beta_end"])
    if schedule.fingerprint() != doc["schedule_fingerprint"]:
        raise ModelError("checkpoint schedule fingerprint mismatch")
    return _model_from_payload(doc["variant"], doc["payload"], schedule)
