"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic      4 bytes   b"IMCK"
    version    uint32    CHECKPOINT_VERSION
    meta_len   uint32    length of the UTF-8 JSON metadata blob
    meta       bytes     architecture / provenance metadata
    n_params   uint32
    repeated n_params times:
        name_len  uint16
        name      bytes (UTF-8)
        ndim      uint8
        dims      uint32 * ndim
        data      float64 * prod(dims), row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, MissingArtifactError

MAGIC = b"IMCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob,
             struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        enc = name.encode()
        parts.append(struct.pack("<H", len(enc)) + enc)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    meta = json.loads(buf[off:off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        size = int(np.prod(dims)) if ndim else 1
        params[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims).copy()
        off += 8 * size
    return params, meta


def assign_parameters(module, values: dict[str, np.ndarray]) -> None:
    live = module.parameters()
    if set(live) != set(values):
        missing = sorted(set(live) ^ set(values))
        raise ConfigError(f"checkpoint/network parameter mismatch: {missing[:5]}")
    for name, arr in live.items():
        if arr.shape != values[name].shape:
            raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {values[name].shape}")
        arr[...] = values[name]
