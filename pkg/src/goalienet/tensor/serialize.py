"""Binary tensor records.

Layout per record (little-endian): u32 name length, UTF-8 name bytes,
u32 rank, u32 per dimension, raw float32 payload.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Iterable

import numpy as np


class CorruptDataError(ValueError):
    """Raised when a binary record is truncated or malformed."""


def _read_exact(fp: BinaryIO, n: int) -> bytes:
    buf = fp.read(n)
    if len(buf) != n:
        raise CorruptDataError(f"truncated data: wanted {n} bytes, got {len(buf)}")
    return buf


def read_u32(fp: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(fp, 4))[0]


def write_u32(fp: BinaryIO, value: int) -> None:
    fp.write(struct.pack("<I", value))


def write_tensor(fp: BinaryIO, name: str, array: np.ndarray) -> None:
    raw = name.encode("utf-8")
    write_u32(fp, len(raw))
    fp.write(raw)
    arr = np.ascontiguousarray(array, dtype="<f4").reshape(np.shape(array))
    write_u32(fp, arr.ndim)
    for d in arr.shape:
        write_u32(fp, d)
    fp.write(arr.tobytes())


def read_tensor(fp: BinaryIO) -> tuple[str, np.ndarray]:
    name_len = read_u32(fp)
    if name_len > 1 << 16:
        raise CorruptDataError(f"implausible tensor name length {name_len}")
    try:
        name = _read_exact(fp, name_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptDataError("tensor name is not valid UTF-8") from exc
    rank = read_u32(fp)
    if rank > 8:
        raise CorruptDataError(f"implausible tensor rank {rank}")
    dims = tuple(read_u32(fp) for _ in range(rank))
    count = int(np.prod(dims)) if dims else 1
    payload = _read_exact(fp, 4 * count)
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    return name, arr


def save_tensors(path, tensors: dict[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> None:
    """Write a bare sequence of tensor records (used for heatmap dumps)."""
    items = tensors.items() if isinstance(tensors, dict) else tensors
    with open(path, "wb") as fp:
        for name, arr in items:
            write_tensor(fp, name, arr)


def load_tensors(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, "rb") as fp:
        data = fp.read()
    buf = io.BytesIO(data)
    while buf.tell() < len(data):
        name, arr = read_tensor(buf)
        out[name] = arr
    return out
