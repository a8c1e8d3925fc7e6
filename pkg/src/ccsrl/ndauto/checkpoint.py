"""Binary parameter container.

Layout (little-endian): b"NDA1", u64 entry count, then per entry u64 name
length, UTF-8 name, u64 rank, rank x u64 dims, float32 data (row-major).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ArtifactError

MAGIC = b"NDA1"


def save_params(path, params: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<Q", len(params))]
    for name, arr in params.items():
        a = np.asarray(arr, dtype="<f4")  # keeps rank 0, unlike ascontiguousarray
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<Q", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<Q", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        chunks.append(a.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ArtifactError(f"{path}: not an NDA1 container")
    off = 4

    def take(n):
        nonlocal off
        if off + n > len(buf):
            raise ArtifactError(f"{path}: truncated container")
        out = buf[off : off + n]
        off += n
        return out

    (count,) = struct.unpack("<Q", take(8))
    params = {}
    for _ in range(count):
        (n,) = struct.unpack("<Q", take(8))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(dims)) if rank else 1
        params[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if off != len(buf):
        raise ArtifactError(f"{path}: {len(buf) - off} trailing bytes")
    return params
