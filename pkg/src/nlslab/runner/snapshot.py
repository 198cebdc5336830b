"""Binary field snapshots.

Layout (little endian)::

    b"NLSF"            magic
    uint32             format version
    uint32             d
    uint32 * d         samples per axis
    float64 * d        half-width L per axis
    float64            time tag
    complex128 * prod  samples, row-major, real/imag interleaved
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from ..model import ComplexField, Grid

MAGIC = b"NLSF"
VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def encode(field: ComplexField) -> bytes:
    g = field.grid
    d = g.ndim
    header = MAGIC + struct.pack(f"<II{d}I{d}dd", VERSION, d, *g.dims, *g.extent, field.time_tag)
    data = np.ascontiguousarray(field.values, dtype="<c16").tobytes(order="C")
    return header + data


def decode(blob: bytes) -> ComplexField:
    if blob[:4] != MAGIC:
        raise SnapshotFormatError("bad magic; not a field snapshot")
    version, d = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if not 1 <= d <= 8:
        raise SnapshotFormatError(f"implausible dimension {d}")
    off = 12
    dims = struct.unpack_from(f"<{d}I", blob, off)
    off += 4 * d
    extent = struct.unpack_from(f"<{d}d", blob, off)
    off += 8 * d
    (time_tag,) = struct.unpack_from("<d", blob, off)
    off += 8
    count = int(np.prod(dims))
    if len(blob) - off != 16 * count:
        raise SnapshotFormatError(f"expected {16 * count} data bytes, found {len(blob) - off}")
    values = np.frombuffer(blob, dtype="<c16", count=count, offset=off).reshape(dims)
    return ComplexField(Grid(dims, extent), values.astype(np.complex128), time_tag)


def atomic_write_bytes(path, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_snapshot(path, field: ComplexField) -> None:
    atomic_write_bytes(path, encode(field))


def read_snapshot(path) -> ComplexField:
    with open(path, "rb") as fh:
        return decode(fh.read())
