"""Versioned little-endian checkpoint files.

Layout: magic ``MSCK``, u16 version, u32 metadata length, UTF-8 JSON
metadata (sorted keys), u32 tensor count, then per tensor: u16 name length,
name, u8 ndim, ndim x u32 dims, float64 data.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"MSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray], metadata: Mapping) -> bytes:
    meta = json.dumps(dict(metadata), sort_keys=True, separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f8"))
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    try:
        version, mlen = struct.unpack_from("<HI", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 10
        meta = json.loads(buf[pos : pos + mlen].decode())
        pos += mlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode()
            pos += nlen
            ndim = buf[pos]
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
            tensors[name] = arr
    except (struct.error, ValueError, IndexError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"truncated or corrupt checkpoint: {e}") from e
    if pos != len(buf):
        raise CheckpointError("trailing bytes in checkpoint")
    return tensors, meta


def save(path, tensors, metadata) -> bytes:
    data = dumps(tensors, metadata)
    Path(path).write_bytes(data)
    return data


def load(path):
    return loads(Path(path).read_bytes())


def tensor_hash(tensors: Mapping[str, np.ndarray]) -> bytes:
    """16-byte digest of tensor names, shapes and values."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f8"))
        h.update(name.encode() + b"\0" + repr(arr.shape).encode())
        h.update(arr.tobytes())
    return h.digest()[:16]
