"""Binary field snapshots and CSV export.

File layout (all little-endian)::

    magic   8 bytes   b"ENVARFLD"
    d       int32     spatial dimension (2)
    n       int32     points per axis
    L       float64   domain edge length
    kind    int32     0 scalar, 1 vector, 2 symmetric matrix, 3 general matrix
    ncomp   int32     components per node (1, 2, 3 or 4)
    data    float64   n * n * ncomp values

Nodes are stored row-major with the x index slowest, and the components
of a node are contiguous.  Symmetric matrices are packed as
``(xx, xy, yy)`` and unpacked to full storage on reading.  General
matrices are stored row by row.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import GridMismatch
from .grid import GridSpec

__all__ = ["write_field", "read_field", "write_field_csv", "KINDS", "MAGIC"]

MAGIC = b"ENVARFLD"
_HEADER = struct.Struct("<8siidii")
KINDS = {"scalar": 0, "vector": 1, "sym": 2, "matrix": 3}
_NCOMP = {"scalar": 1, "vector": 2, "sym": 3, "matrix": 4}
_NAMES = {v: k for k, v in KINDS.items()}


def _pack(field, kind):
    n = field.shape[0]
    if kind == "scalar":
        return field.reshape(n, n, 1)
    if kind == "vector":
        return field
    if kind == "sym":
        return np.stack([field[..., 0, 0], 0.5 * (field[..., 0, 1] + field[..., 1, 0]),
                         field[..., 1, 1]], axis=-1)
    return field.reshape(n, n, 4)


def _unpack(data, kind, n):
    if kind == "scalar":
        return data.reshape(n, n)
    if kind == "vector":
        return data.reshape(n, n, 2)
    if kind == "sym":
        d = data.reshape(n, n, 3)
        out = np.empty((n, n, 2, 2))
        out[..., 0, 0] = d[..., 0]
        out[..., 0, 1] = out[..., 1, 0] = d[..., 1]
        out[..., 1, 1] = d[..., 2]
        return out
    return data.reshape(n, n, 2, 2)


def _check_shape(grid, field, kind):
    expected = {"scalar": (), "vector": (2,), "sym": (2, 2), "matrix": (2, 2)}[kind]
    if field.shape != (grid.n, grid.n) + expected:
        raise GridMismatch(f"field of shape {field.shape} does not match kind {kind!r} "
                           f"on a {grid.n}x{grid.n} grid")


def write_field(path, grid, field, kind):
    """Write ``field`` of the given ``kind`` to ``path``."""
    if kind not in KINDS:
        raise ValueError(f"unknown field kind {kind!r}")
    field = np.asarray(field, dtype=float)
    _check_shape(grid, field, kind)
    packed = np.ascontiguousarray(_pack(field, kind), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, 2, grid.n, float(grid.L), KINDS[kind], _NCOMP[kind]))
        fh.write(packed.tobytes())


def read_field(path):
    """Read a snapshot; returns ``(grid, field, kind)``."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, d, n, L, code, ncomp = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if d != 2 or code not in _NAMES:
            raise ValueError(f"{path}: unsupported header (d={d}, kind={code})")
        kind = _NAMES[code]
        if ncomp != _NCOMP[kind]:
            raise ValueError(f"{path}: component count {ncomp} inconsistent with kind {kind}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n * ncomp:
        raise ValueError(f"{path}: expected {n * n * ncomp} values, found {data.size}")
    grid = GridSpec(n, L)
    return grid, _unpack(data.astype(float), kind, n), kind


def write_field_csv(path, grid, field, kind):
    """Plain-text export: one row per node with coordinates and components."""
    field = np.asarray(field, dtype=float)
    _check_shape(grid, field, kind)
    packed = _pack(field, kind)
    names = {"scalar": ["f"], "vector": ["vx", "vy"], "sym": ["xx", "xy", "yy"],
             "matrix": ["xx", "xy", "yx", "yy"]}[kind]
    X, Y = grid.coords
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ix", "iy", "x", "y"] + names)
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, f"{X[i, j]:.16e}", f"{Y[i, j]:.16e}"]
                           + [f"{v:.16e}" for v in packed[i, j]])
