"""Portable binary tensor files ("PTNS").

Layout, all little-endian:

====== ============ =========================================
field  size         value
====== ============ =========================================
magic  4 bytes      ``b"PTNS"``
version u8          1
dtype  u8           0 = float32, 1 = uint8
ndim   u8           number of dimensions
dims   ndim * u32   dimension sizes
payload              ``prod(dims) * itemsize`` bytes, row-major
====== ============ =========================================

Round trips are bitwise exact.  This is the interchange format for
images, encoder weights, and embeddings.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError

MAGIC = b"PTNS"
VERSION = 1

_DTYPE_BY_CODE = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_CODE_BY_KIND = {"f4": 0, "u1": 1}

_MAX_DIM = 0xFFFFFFFF


def _dtype_code(dtype: np.dtype) -> int:
    key = dtype.str.lstrip("<>|=")
    if key not in _CODE_BY_KIND or dtype.itemsize != _DTYPE_BY_CODE[_CODE_BY_KIND[key]].itemsize:
        raise FileFormatError(
            f"unsupported dtype {dtype}; portable tensors hold float32 or uint8"
        )
    return _CODE_BY_KIND[key]


def write_tensor(path, arr) -> None:
    """Write ``arr`` (float32 or uint8) to ``path`` in the portable format."""
    arr = np.asarray(arr)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # ascontiguousarray would promote 0-d to 1-d
    code = _dtype_code(arr.dtype)
    if arr.ndim > 255:
        raise FileFormatError(f"rank {arr.ndim} exceeds the format limit of 255")
    for d in arr.shape:
        if d > _MAX_DIM:
            raise FileFormatError(f"dimension {d} exceeds the u32 limit")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    """Read a portable tensor; inverse of :func:`write_tensor`, bitwise."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FileFormatError(f"{path}: cannot read ({exc})") from exc
    if len(data) < 7:
        raise FileFormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FileFormatError(f"{path}: bad magic {data[:4]!r}")
    version, code, ndim = struct.unpack("<BBB", data[4:7])
    if version != VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPE_BY_CODE:
        raise FileFormatError(f"{path}: unknown dtype code {code}")
    dims_end = 7 + 4 * ndim
    if len(data) < dims_end:
        raise FileFormatError(f"{path}: truncated dims block")
    dims = struct.unpack(f"<{ndim}I", data[7:dims_end])
    dtype = _DTYPE_BY_CODE[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - dims_end != expected:
        raise FileFormatError(
            f"{path}: payload is {len(data) - dims_end} bytes, expected {expected}"
        )
    arr = np.frombuffer(data, dtype=dtype, offset=dims_end).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)
