"""Deterministic seed derivation and counter-based random streams.

Everything random in the package is keyed from a master seed through
``mix``. The mixing function is the SplitMix64 finalizer applied to a
fold over the input words::

    step(h, w) = fmix64(h ^ fmix64((w + GOLDEN) mod 2**64))
    mix(w0, w1, ..., wk) = step(...step(step(0, w0), w1)..., wk)

Integer index sampling (sensing rows) uses a SplitMix64 counter stream,
``next = fmix64(key + k * GOLDEN)`` for k = 1, 2, ..., with rejection to
remove modulo bias. Gaussian and Bernoulli draws go through numpy's
Philox bit generator keyed by a mixed 64-bit word, which is
platform-independent for a fixed numpy version.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# stream tags
PROBLEM = 1
GRADIENT = 2
CHANNEL = 3
MATRIX = 4
SKETCH = 5
TRIAL = 6
RECON = 7
SWEEP = 8


def fmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _step(h: int, w: int) -> int:
    return fmix64(h ^ fmix64((w + GOLDEN) & MASK64))


def mix(*words: int) -> int:
    """Fold integer words into one 64-bit key."""
    h = 0
    for w in words:
        h = _step(h, int(w) & MASK64)
    return h


def fmix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def mix_array(key: int, words: np.ndarray) -> np.ndarray:
    """Vectorized ``step(key, w)`` for every w; equals ``mix(..., w)`` when
    ``key`` is the fold of the preceding words."""
    w = np.asarray(words).astype(np.uint64)
    return fmix64_array(np.uint64(key) ^ fmix64_array(w + np.uint64(GOLDEN)))


class SplitMix64:
    """Counter-based 64-bit stream. ``next()`` is fmix64(key + k*GOLDEN)."""

    def __init__(self, key: int):
        self.key = key & MASK64
        self.counter = 0

    def next(self) -> int:
        self.counter += 1
        return fmix64(self.key + self.counter * GOLDEN)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next()
            if r < limit:
                return r % n


def generator(*words: int) -> np.random.Generator:
    """numpy Generator on a Philox stream keyed by ``mix(*words)``."""
    return np.random.Generator(np.random.Philox(key=mix(*words)))
