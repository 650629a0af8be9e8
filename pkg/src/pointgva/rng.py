"""Seeded, splittable random streams (Philox counter-based generator).

Every consumer derives its own stream from one user seed plus a string
path, so adding a consumer never perturbs the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, int):
        return part
    return zlib.crc32(str(part).encode())


def make_rng(seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
