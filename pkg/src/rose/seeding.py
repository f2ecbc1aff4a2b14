"""Named random sub-streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(master_seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator for sub-stream ``name`` (e.g. "scene", "augment", "train").

    Different names or keys give statistically independent streams; the same
    arguments always give the same stream.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, _key(name), *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(master_seed: int, name: str, *keys: int) -> int:
    return int(stream(master_seed, name, *keys).integers(0, 2**62))
