"""Standalone writer/reader for the FVF1 binary feature format.

Deliberately independent of any downstream package: the byte layout is the
interface. Little-endian:

    magic "FVF1" | u32 version=1 | u64 N | u32 d | u32 K
    K x (u32 byte length + UTF-8 class name)
    u32 byte length + UTF-8 JSON metadata
    N x d float32 features, row-major
    N x u16 labels
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FVF1"
VERSION = 1


def write_fvf(path, features: np.ndarray, labels: np.ndarray,
              class_names: list[str], meta: dict) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.asarray(labels)
    n, d = features.shape
    k = len(class_names)
    if len(labels) != n:
        raise ValueError("features/labels length mismatch")
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("label out of range [0, K)")
    if not np.isfinite(features).all():
        raise ValueError("non-finite feature values")
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<QII", n, d, k)]
    for name in class_names:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_raw)))
    chunks.append(meta_raw)
    chunks.append(features.tobytes())
    chunks.append(labels.astype("<u2").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_fvf(path):
    """Returns (features, labels, class_names, meta); used for verification."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ValueError("truncated payload")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise ValueError("bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    n, d, k = struct.unpack("<QII", take(16))
    names = []
    for _ in range(k):
        (ln,) = struct.unpack("<I", take(4))
        names.append(take(ln).decode("utf-8"))
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8")) if meta_len else {}
    feats = np.frombuffer(take(n * d * 4), dtype="<f4").reshape(n, d).copy()
    labels = np.frombuffer(take(n * 2), dtype="<u2").astype(np.int64)
    if pos != len(buf):
        raise ValueError("trailing bytes after payload")
    return feats, labels, names, meta
