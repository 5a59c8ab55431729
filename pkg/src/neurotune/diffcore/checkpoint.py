"""Parameter checkpoints.

A checkpoint is a directory holding ``manifest.json`` (tensor order, shapes)
and ``tensors.bin``.  Each record in ``tensors.bin`` is a header followed by
the little-endian float32 payload::

    u32 name_len | name (utf-8) | u8 dtype code (1 = f32) | u32 ndim | u32 dims[ndim] | payload
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..io_util import atomic_write_bytes, atomic_write_text

_F32 = 1


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BI", _F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_tensors(blob: bytes) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        dtype_code, ndim = struct.unpack_from("<BI", blob, pos)
        pos += 5
        if dtype_code != _F32:
            raise ValueError(f"unsupported dtype code {dtype_code} for '{name}'")
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        count = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
        pos += 4 * count
    return out


def save_checkpoint(path: str | os.PathLike, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "neurotune-checkpoint",
        "version": 1,
        "tensors": [{"name": k, "shape": list(np.shape(v)), "dtype": "float32"} for k, v in tensors.items()],
    }
    atomic_write_bytes(path / "tensors.bin", encode_tensors(tensors))
    atomic_write_text(path / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    tensors = decode_tensors((path / "tensors.bin").read_bytes())
    order = [t["name"] for t in manifest["tensors"]]
    if order != list(tensors):
        raise ValueError(f"checkpoint manifest order does not match payload in {path}")
    return {name: tensors[name].astype(np.float64) for name in order}
