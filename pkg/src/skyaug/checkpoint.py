"""Binary checkpoint container shared by the GAN nets and the PLS model.

Layout (all integers little-endian):

    magic      8 bytes   b"SKYAUGV1"
    version    u32       currently 1
    kind       u16 length + utf-8 bytes (e.g. "generator", "pls")
    meta       u32 length + utf-8 JSON object (small scalar fields)
    count      u32       number of named arrays
    per array:
        name   u16 length + utf-8 bytes
        ndim   u8
        dims   ndim x u32
        data   prod(dims) x f8 little-endian
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SKYAUGV1"
VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or of the wrong kind."""


def save_arrays(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    kind_b = kind.encode("utf-8")
    meta_b = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<H", len(kind_b)) + kind_b)
        fh.write(struct.pack("<I", len(meta_b)) + meta_b)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            name_b = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f8")
            fh.write(struct.pack("<H", len(name_b)) + name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_arrays(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    pos = 0
    if take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (kind_len,) = struct.unpack("<H", take(2))
    kind = take(kind_len).decode("utf-8")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims)
        arrays[name] = arr.astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
    return kind, meta, arrays
