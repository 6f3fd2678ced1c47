"""Counter-based random streams keyed by (seed, label path, mode).

Every mode draws from its own Philox generator seeded through
``SeedSequence([seed, *path, mode])``. Adding modes to a run therefore
leaves the draws of the existing modes untouched, and results never depend
on how work is split across threads.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("stream keys must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple = ()

    def spawn(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(_key(k) for k in labels))

    def generator(self, *labels) -> np.random.Generator:
        entropy = [int(self.seed), *self.path, *(_key(k) for k in labels)]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def normals(self, n_modes: int, shape=(), k: int = 2) -> np.ndarray:
        """Standard normals of shape ``(*shape, n_modes, k)``, one stream per mode."""
        shape = (int(shape),) if isinstance(shape, (int, np.integer)) else tuple(shape)
        out = np.empty(shape + (n_modes, k))
        for m in range(n_modes):
            out[..., m, :] = self.generator("mode", m).standard_normal(shape + (k,))
        return out

    def uniform(self, shape=()) -> np.ndarray:
        return self.generator("uniform").random(shape)


def as_stream(seed_or_stream) -> RngStream:
    if isinstance(seed_or_stream, RngStream):
        return seed_or_stream
    return RngStream(int(seed_or_stream))
