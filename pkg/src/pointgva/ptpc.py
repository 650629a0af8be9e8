"""PTPC binary point-cloud files.

Layout (little-endian)::

    b"PTPC"            4 bytes
    version  u32       = 1
    flags    u32       bit 0: labels block present
    n        u32
    c        u32
    positions f32[n*3]
    features  f32[n*c]
    labels    i32[n]   (only when flag bit 0 is set)

Storage is 32-bit, so a round trip through a file rounds float64 values.
"""

from __future__ import annotations

import struct

import numpy as np

from .geom import PointCloud

MAGIC = b"PTPC"
VERSION = 1
FLAG_LABELS = 1
_HEADER = struct.Struct("<4sIIII")


def write_cloud(path, cloud: PointCloud, labels=None) -> None:
    flags = FLAG_LABELS if labels is not None else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, flags, cloud.n, cloud.c))
        fh.write(cloud.positions.astype("<f4").tobytes())
        fh.write(cloud.features.astype("<f4").tobytes())
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (cloud.n,):
                raise ValueError(f"labels must have shape ({cloud.n},), got {labels.shape}")
            fh.write(labels.astype("<i4").tobytes())


def read_cloud(path) -> tuple[PointCloud, np.ndarray | None]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, flags, n, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * (n * 3 + n * c + (n if flags & FLAG_LABELS else 0))
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HEADER.size
    pos = np.frombuffer(raw, "<f4", n * 3, off).reshape(n, 3)
    off += 12 * n
    feat = np.frombuffer(raw, "<f4", n * c, off).reshape(n, c)
    off += 4 * n * c
    labels = np.frombuffer(raw, "<i4", n, off).astype(np.int64) if flags & FLAG_LABELS else None
    return PointCloud(pos.astype(np.float64), feat.astype(np.float64)), labels
