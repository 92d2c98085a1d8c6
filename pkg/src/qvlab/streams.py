"""Reproducible, splittable random streams.

Each stream is addressed by ``(seed, tag, member)``.  Distinct addresses map
to disjoint Philox counter streams, so components and ensemble members never
share random numbers and execution order cannot influence results.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, member: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(member)))
    return np.random.Generator(np.random.Philox(ss))
