"""Seeded random streams.

Every consumer derives its own counter-based (Philox) stream from the run
seed and a stream name, so adding a consumer never shifts another's draws.
"""
from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, *stream: str | int) -> np.random.Generator:
    key = tuple(zlib.crc32(s.encode()) if isinstance(s, str) else int(s) for s in stream)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
