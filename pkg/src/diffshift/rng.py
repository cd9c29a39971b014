"""Deterministic random streams.

All randomness in an experiment flows from a single root seed. Each
consumer gets its own named substream so that, e.g., changing the number
of training steps never perturbs the sampling noise.
"""

import numpy as np

# Registry of named substreams. New names must be appended, never renumbered,
# or previously written artifacts stop being reproducible.
STREAMS = {
    "data": 0,
    "init": 1,
    "training": 2,
    "sampling": 3,
    "diagnostics": 4,
    "perturbation": 5,
    "sweep": 6,
    "verify": 7,
}


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for a named substream of the root seed."""
    if name not in STREAMS:
        raise KeyError(f"unknown stream name {name!r}; known: {sorted(STREAMS)}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name]]))


def chain_stream(seed: int, name: str, index: int) -> np.random.Generator:
    """Per-worker stream: independent of other indices, reproducible."""
    if name not in STREAMS:
        raise KeyError(f"unknown stream name {name!r}; known: {sorted(STREAMS)}")
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), STREAMS[name], int(index)])
    )
