"""Flat binary tensor files used to move probabilities and embeddings
between the harness and external model adapters.

Layout (all little-endian):
    bytes 0..7    magic b"ALTENS01"
    bytes 8..11   ndim, uint32
    then          ndim x uint64 dims
    then          product(dims) float32 values, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ALTENS01"


class TensorFileError(ValueError):
    """Raised on malformed tensor files."""


def write_tensor(values, path: str | Path) -> None:
    """Write a float32 tensor; round-trips bit-exactly through read_tensor."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim == 0:
        raise TensorFileError("scalar tensors are not supported")
    if any(d <= 0 for d in arr.shape):
        raise TensorFileError(f"dims must all be positive, got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor written by write_tensor (or a conforming producer)."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4:
        raise TensorFileError(f"{path}: truncated header")
    if blob[: len(MAGIC)] != MAGIC:
        raise TensorFileError(f"{path}: bad magic {blob[:8]!r}")
    (ndim,) = struct.unpack_from("<I", blob, len(MAGIC))
    offset = len(MAGIC) + 4
    if len(blob) < offset + 8 * ndim:
        raise TensorFileError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    count = 1
    for d in dims:
        count *= d
    payload = blob[offset:]
    if len(payload) != 4 * count:
        raise TensorFileError(
            f"{path}: dims/payload mismatch (dims {dims} need {4 * count} bytes, "
            f"payload has {len(payload)})"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    return flat.reshape(dims).astype(np.float32, copy=True)
