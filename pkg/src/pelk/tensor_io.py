"""PTNS binary tensors and 2-D CSV.

PTNS layout, little-endian: b"PTNS", u16 version (1), u16 ndim, ndim x u32
dims, then row-major f32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTNS"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def dumps(a) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f4")
    if a.ndim == 0 or a.ndim > 0xFFFF:
        raise TensorFormatError(f"unsupported rank {a.ndim}")
    if any(d < 1 for d in a.shape):
        raise TensorFormatError(f"dims must be positive, got {a.shape}")
    head = MAGIC + struct.pack("<HH", VERSION, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes()


def loads(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFormatError("missing PTNS magic")
    version, ndim = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported PTNS version {version}")
    off = 8 + 4 * ndim
    if len(buf) < off:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 8)
    n = int(np.prod(dims)) if dims else 0
    if ndim == 0 or any(d < 1 for d in dims):
        raise TensorFormatError(f"invalid dims {dims}")
    if len(buf) - off != 4 * n:
        raise TensorFormatError(f"expected {4 * n} data bytes, found {len(buf) - off}")
    return np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims).astype(np.float32)


def save(path, a) -> None:
    Path(path).write_bytes(dumps(a))


def load(path) -> np.ndarray:
    """Read a PTNS file, or a 2-D CSV when the path ends in ``.csv``."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return loads(path.read_bytes())


def save_csv(path, a) -> None:
    a = np.asarray(a, dtype=np.float32)
    if a.ndim != 2:
        raise TensorFormatError("CSV holds 2-D tensors only")
    np.savetxt(path, a, delimiter=",", fmt="%.9g")


def load_csv(path) -> np.ndarray:
    a = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
    return a
