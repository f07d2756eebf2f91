"""Binary grid, cube and block-matrix files, CSV tables and atomic writes.

Every binary file starts with the same 32-byte little-endian header::

    offset  type     field
    0       4s       magic b"RWIV"
    4       uint32   nx
    8       uint32   nz
    12      uint32   kind (0 grid, 1 data cube, 2 block matrix)
    16      float64  h
    24      uint64   count

followed by ``count`` contiguous row-major float64 arrays of shape
``(nx, nz)``. The meaning of the fields per kind:

* grid: ``(nx, nz)`` is the grid shape, ``h`` the mesh size and ``count`` the
  number of stacked fields (usually 1).
* data cube: ``nx = nz = m``, ``h`` holds the sampling step ``tau`` and the
  ``count`` matrices are ``D_0 ... D_{count-1}``.
* block matrix: ``nx = nz = m`` is the block size, ``h`` is zero and the
  ``count = n * n`` blocks of the ``(n m) x (n m)`` matrix follow row-major
  by block.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import BlockMatrix, ROMWaveError

MAGIC = b"RWIV"
HEADER = struct.Struct("<4sIIIdQ")
KIND_GRID, KIND_CUBE, KIND_BLOCK = 0, 1, 2
KIND_NAMES = {KIND_GRID: "grid", KIND_CUBE: "cube", KIND_BLOCK: "block matrix"}

assert HEADER.size == 32


class FormatError(ROMWaveError):
    """A file does not follow the binary layout."""


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to a temporary file and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def pack(kind, arrays, h):
    """Header plus payload for a stack ``arrays`` of shape ``(count, nx, nz)``."""
    arrays = np.ascontiguousarray(arrays, dtype="<f8")
    if arrays.ndim != 3:
        raise FormatError(f"expected a stack of 2D arrays, got shape {arrays.shape}")
    count, nx, nz = arrays.shape
    return HEADER.pack(MAGIC, nx, nz, kind, float(h), count) + arrays.tobytes()


def unpack(buf, expect_kind=None):
    """Inverse of :func:`pack`; returns ``(kind, h, arrays)``."""
    if len(buf) < HEADER.size:
        raise FormatError("file is shorter than the 32-byte header")
    magic, nx, nz, kind, h, count = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if kind not in KIND_NAMES:
        raise FormatError(f"unknown kind {kind}")
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"expected a {KIND_NAMES[expect_kind]} file, found a {KIND_NAMES[kind]}")
    expected = HEADER.size + 8 * nx * nz * count
    if len(buf) != expected:
        raise FormatError(f"payload size mismatch: {len(buf)} bytes, header implies {expected}")
    arrays = np.frombuffer(buf, dtype="<f8", offset=HEADER.size).reshape(count, nx, nz)
    return kind, h, arrays.astype(float)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def write_grid(path, field, h):
    """Store one ``(nx, nz)`` field, or a stack ``(count, nx, nz)``."""
    field = np.asarray(field, dtype=float)
    atomic_write(path, pack(KIND_GRID, field[None] if field.ndim == 2 else field, h))


def read_grid(path):
    """Returns ``(fields, h)``; ``fields`` has shape ``(count, nx, nz)``."""
    _, h, arrays = unpack(_read(path), KIND_GRID)
    return arrays, h


def write_cube(path, cube):
    atomic_write(path, pack(KIND_CUBE, cube.D, cube.tau))


def read_cube(path):
    from .wave_sim import DataCube
    _, tau, arrays = unpack(_read(path), KIND_CUBE)
    return DataCube(arrays, tau)


def write_block_matrix(path, M):
    n, m = M.nblocks, M.block_size
    blocks = M.data.reshape(n, m, n, m).transpose(0, 2, 1, 3).reshape(n * n, m, m)
    atomic_write(path, pack(KIND_BLOCK, blocks, 0.0))


def read_block_matrix(path):
    _, _, blocks = unpack(_read(path), KIND_BLOCK)
    n = int(round(np.sqrt(blocks.shape[0])))
    if n * n != blocks.shape[0] or blocks.shape[1] != blocks.shape[2]:
        raise FormatError("block matrix file does not hold a square array of square blocks")
    return BlockMatrix.from_blocks(blocks.reshape(n, n, *blocks.shape[1:]))


def csv_text(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return out.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))
