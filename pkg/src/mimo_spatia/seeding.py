"""Order-independent seed derivation for sweep points."""
from __future__ import annotations

import zlib

import numpy as np


def kind_key(kind: str) -> int:
    return zlib.crc32(kind.encode("utf-8"))


def point_seed(master_seed: int, kind: str, *path: int) -> np.random.SeedSequence:
    """Seed for sweep point ``path`` of experiment ``kind``.

    Depends only on (master_seed, kind, path), never on execution order.
    """
    return np.random.SeedSequence(entropy=(int(master_seed), kind_key(kind)), spawn_key=tuple(int(p) for p in path))


def point_rng(master_seed: int, kind: str, *path: int) -> np.random.Generator:
    return np.random.default_rng(point_seed(master_seed, kind, *path))
