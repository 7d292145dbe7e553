"""Deterministic random streams for reproducible experiments.

All randomness in the package flows through :class:`RandomSource`, a
(seed, stream_id) pair mapped onto numpy's counter-based Philox generator.
Equal pairs replay bit-identically on any platform; distinct stream ids give
statistically independent streams, so simulations can hand out one stream per
iteration / allocator / mechanism without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENERATOR_VERSION = "philox4x64:numpy"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomSource:
    """A named, splittable stream of randomness.

    seed and stream_id are reduced modulo 2^64 into the Philox key, so any
    Python integers are accepted.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = [self.seed & _MASK64, self.stream_id & _MASK64]
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, offset: int) -> "RandomSource":
        """Sibling source at stream_id + offset (same seed)."""
        return RandomSource(self.seed, (self.stream_id + offset) & _MASK64)


def as_generator(rng: "RandomSource | np.random.Generator") -> np.random.Generator:
    """Accept either a RandomSource or a ready Generator."""
    if isinstance(rng, RandomSource):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RandomSource or numpy Generator, got {type(rng)!r}")


def seed_of(rng: "RandomSource | np.random.Generator") -> int:
    """Seed recorded in allocation results; 0 for bare generators."""
    return rng.seed if isinstance(rng, RandomSource) else 0
