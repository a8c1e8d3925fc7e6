"""Named, independent random streams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def stream(seed: int, *path) -> np.random.Generator:
    """Generator for the consumer named by ``path``, e.g. ``stream(7, "traj", 12)``.

    Streams with different paths are statistically independent, and a
    stream's draws do not depend on which other streams exist.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.default_rng(ss)
