"""Named-tensor container used for checkpoints and external feature weights.

Layout (all integers little-endian uint32)::

    magic  b"FRCK"
    version
    config length, config text (utf-8)
    entry count
    per entry: name length, name (utf-8), dtype code (0 = float32, 1 = uint32),
               ndim, dims..., raw little-endian payload

Entries are written in the order given, so identical state always serializes
to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FRCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u4")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 0, np.dtype("uint32"): 1,
          np.dtype("int64"): 1, np.dtype("int32"): 1, np.dtype("uint64"): 1}


class CheckpointError(ValueError):
    pass


def encode(tensors: dict, config_text: str = "") -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        if code == 1 and arr.size and (arr.min() < 0 or arr.max() >= 2 ** 32):
            raise CheckpointError(f"{name}: integer values out of uint32 range")
        payload = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<II", code, arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), payload]
    return b"".join(parts)


def decode(blob: bytes) -> tuple:
    """Return ``(config_text, {name: array})``."""
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    config_text = bytes(take(cfg_len)).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<II", take(8))
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(bytes(take(nbytes)), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise CheckpointError("trailing bytes after last entry")
    return config_text, tensors


def write_tensors(path, tensors: dict, config_text: str = "") -> None:
    Path(path).write_bytes(encode(tensors, config_text))


def read_tensors(path) -> dict:
    return decode(Path(path).read_bytes())[1]


def read_checkpoint(path) -> tuple:
    return decode(Path(path).read_bytes())
