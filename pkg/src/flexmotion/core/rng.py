"""Counter-based deterministic random streams.

Every draw derives a fresh PCG64 generator from (seed, counter), so an
identical seed and call sequence reproduces identical values on every
platform, independent of how many values each call consumes.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    def __init__(self, seed: int, lane: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.lane = int(lane)
        self.counter = 0

    def _next_gen(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(self.lane, self.counter))
        self.counter += 1
        return np.random.Generator(np.random.PCG64(ss))

    def split(self, lane: int) -> "RngStream":
        """Independent child stream; does not advance this stream's counter."""
        child = RngStream(self.seed)
        child.lane = (self.lane << 16) ^ (int(lane) + 1)
        return child

    def normal(self, shape=()) -> np.ndarray:
        return self._next_gen().standard_normal(shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        return self._next_gen().uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._next_gen().integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._next_gen().permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._next_gen().choice(n, size=size, replace=replace)
