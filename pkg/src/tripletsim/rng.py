"""Named, counter-based random substreams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("substream counters must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(check_seed(seed), spawn_key=tuple(_key(p) for p in path))


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for ``path`` under ``seed``; same inputs give the same stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))
