"""Versioned binary checkpoints for named parameter tensors.

Layout (little-endian):

    magic   8 bytes  b"QMIXCKPT"
    version 1 byte
    count   uint32
    then per record:
        name_len uint16, name utf-8 bytes
        ndim     uint8,  dims uint32 * ndim
        payload  float64 * prod(dims), row-major
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

MAGIC = b"QMIXCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, params: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = arr.shape  # before ascontiguousarray, which promotes 0-d to 1-d
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape))
        chunks.append(np.ascontiguousarray(arr).tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_params(path) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    version, count = struct.unpack_from("<BI", raw, offset)
    offset += struct.calcsize("<BI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset: offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        params[name] = arr.astype(np.float64)  # own, writable copy
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after last record")
    return params
