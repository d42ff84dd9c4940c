"""
Flat binary tensor format.

Layout (little-endian): magic b"SAFT", u32 rank, rank x u64 dims, then the
float64 payload in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.tensor.tensor import Tensor

MAGIC = b"SAFT"


class TensorFormatError(ValueError):
    pass


def encode_tensor(value: Union[Tensor, np.ndarray]) -> bytes:
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one tensor starting at `offset`; returns (array, offset after it)."""
    if buf[offset:offset + 4] != MAGIC:
        raise TensorFormatError(f"Bad magic at offset {offset}")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise TensorFormatError("Truncated rank field")
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if len(buf) < pos + 8 * rank:
        raise TensorFormatError("Truncated shape field")
    shape = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    end = pos + 8 * count
    if len(buf) < end:
        raise TensorFormatError(f"Payload truncated: need {8 * count} bytes")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
    return arr, end


def save_tensor(value: Union[Tensor, np.ndarray], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(value))


def load_tensor(path: Union[str, Path]) -> Tensor:
    buf = Path(path).read_bytes()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise TensorFormatError(f"{len(buf) - end} trailing bytes in {path}")
    return Tensor(arr)
