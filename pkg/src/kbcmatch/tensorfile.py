"""Bit-exact binary tensor files.

Layout (little endian throughout):

    bytes 0..3   magic ``KBCT``
    byte  4      version, currently 1
    byte  5      dtype code: 0 = float32, 1 = float64
    byte  6      rank (number of axes, 0..6)
    byte  7      reserved, must be 0
    next 4*rank  u32 extents, outermost axis first
    rest         row-major scalars

Reads validate magic, version, dtype and payload length before any array is
materialised; each failure mode is a distinct error class.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ShapeError,
    TruncatedPayloadError,
    UnknownDtypeError,
    UnknownVersionError,
)

MAGIC = b"KBCT"
VERSION = 1
MAX_RANK = 6

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialise an array to the tensor-file byte layout."""
    array = np.asarray(array)
    dtype = np.dtype(array.dtype).newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise UnknownDtypeError(f"unsupported dtype {array.dtype}; use float32 or float64")
    if array.ndim > MAX_RANK:
        raise ShapeError(f"rank {array.ndim} exceeds the {MAX_RANK}-axis limit")
    header = MAGIC + struct.pack("<BBBB", VERSION, _DTYPE_CODES[dtype], array.ndim, 0)
    extents = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=dtype).tobytes()
    return header + extents + payload


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 8:
        raise TruncatedPayloadError(f"file shorter than the 8-byte header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, dtype_code, rank, reserved = struct.unpack("<BBBB", blob[4:8])
    if version != VERSION:
        raise UnknownVersionError(f"unknown version {version}, expected {VERSION}")
    if dtype_code not in _CODE_DTYPES:
        raise UnknownDtypeError(f"unknown dtype code {dtype_code}")
    if rank > MAX_RANK:
        raise ShapeError(f"rank {rank} exceeds the {MAX_RANK}-axis limit")
    if reserved != 0:
        raise UnknownVersionError(f"reserved header byte is {reserved}, expected 0")
    ext_end = 8 + 4 * rank
    if len(blob) < ext_end:
        raise TruncatedPayloadError("file ends inside the extent table")
    shape = struct.unpack(f"<{rank}I", blob[8:ext_end])
    if any(e < 1 for e in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    dtype = _CODE_DTYPES[dtype_code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    expected = ext_end + count * dtype.itemsize
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"payload length {len(blob) - ext_end} != expected {count * dtype.itemsize}"
        )
    data = np.frombuffer(blob[ext_end:], dtype=dtype).reshape(shape)
    return np.array(data)  # owned, writable copy


def write_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_bytes(array))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def write_named_tensors(path, entries: dict[str, np.ndarray]) -> None:
    """Write a bundle of named tensors (weight files): a count-prefixed sequence
    of (u16 name length, utf-8 name, tensor-file blob with its own u32 length prefix)."""
    parts = [MAGIC + struct.pack("<BBBB", VERSION, 255, 0, 0), struct.pack("<I", len(entries))]
    for name, array in entries.items():
        raw = name.encode("utf-8")
        blob = tensor_bytes(array)
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", len(blob)) + blob)
    Path(path).write_bytes(b"".join(parts))


def read_named_tensors(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise TruncatedPayloadError("bundle shorter than its header")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, kind, _, _ = struct.unpack("<BBBB", blob[4:8])
    if version != VERSION:
        raise UnknownVersionError(f"unknown version {version}")
    if kind != 255:
        raise UnknownDtypeError("not a named-tensor bundle")
    (count,) = struct.unpack("<I", blob[8:12])
    offset = 12
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(blob) < offset + 2:
            raise TruncatedPayloadError("bundle ends inside an entry header")
        (name_len,) = struct.unpack("<H", blob[offset : offset + 2])
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        if len(blob) < offset + 4:
            raise TruncatedPayloadError(f"bundle ends before the blob length of '{name}'")
        (blob_len,) = struct.unpack("<I", blob[offset : offset + 4])
        offset += 4
        if len(blob) < offset + blob_len:
            raise TruncatedPayloadError(f"bundle ends inside tensor '{name}'")
        entries[name] = tensor_from_bytes(blob[offset : offset + blob_len])
        offset += blob_len
    return entries
