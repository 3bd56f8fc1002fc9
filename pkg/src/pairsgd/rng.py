"""Deterministic counter-based random streams.

Every source of randomness in the library is a named substream of a single
64-bit seed, built on Philox so that draw sequences are identical across
platforms and thread schedules.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode())


class SeedStream:
    """Splittable stream: `generator(*tags)` yields an independent Philox generator.

    The same (seed, tags) always produces the same generator state, regardless
    of how many other substreams were created in between.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, *tags) -> np.random.Generator:
        key = (self.seed,) + tuple(_tag_to_int(t) for t in tags)
        seq = np.random.SeedSequence(entropy=key[0] & 0xFFFFFFFFFFFFFFFF, spawn_key=key[1:])
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *tags) -> "SeedStream":
        mix = self.seed & 0xFFFFFFFFFFFFFFFF
        for t in tags:
            mix = (mix * 0x9E3779B97F4A7C15 + _tag_to_int(t) + 1) & 0xFFFFFFFFFFFFFFFF
        return SeedStream(mix)
