"""Seeded random streams.

Every chain draws from its own Philox stream spawned from a master
``SeedSequence``; scalar draws are served from a buffer because per-call
overhead of ``Generator`` dominates in the sampler's inner loop.
"""

import numpy as np

_BUFFER = 4096


class RandomStream:
    """Buffered scalar uniforms on top of a counter-based generator."""

    def __init__(self, seed=None):
        if isinstance(seed, RandomStream):
            seed = seed.seed_seq.spawn(1)[0]
        if isinstance(seed, np.random.SeedSequence):
            self.seed_seq = seed
        else:
            self.seed_seq = np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.Philox(self.seed_seq))
        self._buf = None
        self._pos = _BUFFER

    def spawn(self, n):
        return [RandomStream(s) for s in self.seed_seq.spawn(n)]

    def random(self):
        if self._pos >= _BUFFER:
            self._buf = self.generator.random(_BUFFER).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniform(self, a, b):
        return a + (b - a) * self.random()

    def integers(self, n):
        """Uniform integer in ``[0, n)``."""
        k = int(self.random() * n)
        return k if k < n else n - 1

    def choice(self, seq):
        return seq[self.integers(len(seq))]


def as_stream(rng):
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, np.random.Generator):
        return RandomStream(np.random.SeedSequence(int(rng.integers(2**63))))
    return RandomStream(rng)


def chain_streams(master_seed, n_chains):
    """Independent per-chain streams derived from one master seed."""
    return [RandomStream(s) for s in np.random.SeedSequence(master_seed).spawn(n_chains)]
