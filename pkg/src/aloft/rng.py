"""Portable seeded random streams.

Bits come from numpy's Philox-4x64 counter-based generator, which numpy
guarantees to be stable across platforms and releases.  Gaussian variates
are produced here with the Box-Muller transform rather than numpy's
ziggurat so the whole path is documented end to end.
"""

import numpy as np


class Rng:
    """A seeded random stream.

    ``Rng(seed)`` and ``Rng(seed).child(k)`` are deterministic functions of
    their arguments, so independent streams for workers, domains or model
    blocks can be derived without sharing state.
    """

    def __init__(self, seed, key=()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"

    def child(self, *key):
        return Rng(self.seed, self.key + tuple(key))

    def uniform(self, shape=(), low=0.0, high=1.0):
        return self._gen.uniform(low, high, size=shape)

    def normal(self, shape=(), std=1.0):
        """Standard normal draws scaled by ``std`` (Box-Muller)."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        # 1 - U lies in (0, 1], keeping log() finite
        radius = np.sqrt(-2.0 * np.log(1.0 - self._gen.random(pairs)))
        # single precision is ample for the angle and far cheaper to feed to cos/sin
        theta = np.float32(2.0 * np.pi) * self._gen.random(pairs, dtype=np.float32)
        z = np.empty(2 * pairs)
        np.multiply(radius, np.cos(theta), out=z[:pairs])
        np.multiply(radius, np.sin(theta), out=z[pairs:])
        return z[:n].reshape(shape) * std

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high=None, shape=None):
        return self._gen.integers(low, high, size=shape)
