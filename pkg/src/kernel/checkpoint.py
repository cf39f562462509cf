"""
SNNW parameter blobs.

Layout (little-endian): ``b"SNNW"``, u16 version, u32 tensor count, then per
tensor: u16 name length, UTF-8 name, u8 dtype code, u8 rank, u32 dims, raw
data in C order.
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from src.utils.errors import CorruptContainerError, DataIOError
from src.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"SNNW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise ValueError(f"Unsupported dtype {arr.dtype} for tensor {name}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    if len(view) < 10 or bytes(view[:4]) != MAGIC:
        raise CorruptContainerError("Not an SNNW blob (bad magic)")
    version, count = struct.unpack_from("<HI", view, 4)
    if version != VERSION:
        raise CorruptContainerError(f"Unsupported SNNW version {version}")
    offset = 10
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            code, rank = struct.unpack_from("<BB", view, offset)
            offset += 2
            shape = struct.unpack_from(f"<{rank}I", view, offset)
            offset += 4 * rank
            if code not in _DTYPES:
                raise CorruptContainerError(f"Unknown dtype code {code} for tensor {name}")
            dtype = _DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(view):
                raise CorruptContainerError(f"Truncated data for tensor {name}")
            data = np.frombuffer(view[offset : offset + nbytes], dtype=dtype).reshape(shape)
            tensors[name] = data.astype(dtype.newbyteorder("="))
            offset += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptContainerError(f"Truncated SNNW blob: {exc}") from exc
    if offset != len(view):
        raise CorruptContainerError(f"{len(view) - offset} trailing bytes after last tensor")
    return tensors


def save_checkpoint(tensors: Mapping[str, np.ndarray], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))
    logger.debug(f"💾 Saved {len(tensors)} tensors to {path}")


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise DataIOError(f"Checkpoint not found: {path}")
    with open(path, "rb") as fh:
        return loads(fh.read())
