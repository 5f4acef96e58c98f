"""Named random streams derived from a single integer seed.

Every consumer asks for a stream by a dotted purpose name. The name is hashed
into the spawn key of a :class:`numpy.random.SeedSequence`, so adding a new
consumer never shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> tuple[int, ...]:
    parts = [p for p in name.split(".") if p]
    if not parts:
        raise ValueError("stream name must be non-empty")
    return tuple(zlib.crc32(p.encode("utf-8")) for p in parts)


def seed_sequence(seed: int, name: str) -> np.random.SeedSequence:
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed), spawn_key=stream_key(name))


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent PCG64 generator for ``name`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, name)))
