"""Flat binary field files: JSON header plus row-major float64 payload.

Layout: 8-byte little-endian header length, the UTF-8 JSON header, then the
raw values.  The header carries the grid spacing, bounding box, lattice
shape, a run-length encoding of the interior mask, and field metadata, so a
file is self-describing without the originating grid object.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .geometry import Grid, ScalarField, VectorField

_MAGIC = "lakesim-field-v1"


def mask_rle(mask):
    """Run-length encoding of a boolean lattice, row-major: [v0, n0, v1, n1, ...]."""
    flat = np.asarray(mask, dtype=np.int8).ravel()
    if flat.size == 0:
        return []
    change = np.nonzero(np.diff(flat))[0]
    starts = np.concatenate([[0], change + 1])
    ends = np.concatenate([change + 1, [flat.size]])
    out = []
    for s, e in zip(starts, ends):
        out.extend([int(flat[s]), int(e - s)])
    return out


def mask_from_rle(rle, shape):
    vals = []
    for v, n in zip(rle[::2], rle[1::2]):
        vals.append(np.full(n, v, dtype=np.int8))
    flat = np.concatenate(vals) if vals else np.zeros(0, dtype=np.int8)
    return flat.reshape(shape).astype(bool)


def save_field(path, field):
    grid = field.grid
    kind = "vector" if isinstance(field, VectorField) else "scalar"
    header = {
        "magic": _MAGIC,
        "kind": kind,
        "name": field.name,
        "time": field.time,
        "h": grid.h,
        "bbox": [float(grid.x[0]), float(grid.x[-1]), float(grid.y[0]), float(grid.y[-1])],
        "shape": list(grid.shape),
        "mask_rle": mask_rle(grid.interior),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_field(path, grid: Grid | None = None):
    """Read a field file; returns (header, values) or a Field when a grid of
    matching shape is supplied."""
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        if header.get("magic") != _MAGIC:
            raise ValueError(f"{path} is not a lakesim field file")
        payload = fh.read()
    shape = tuple(header["shape"])
    count = int(np.prod(shape))
    if header["kind"] == "vector":
        values = np.frombuffer(payload, dtype="<f8", count=count * 2).reshape(shape + (2,))
    else:
        values = np.frombuffer(payload, dtype="<f8", count=count).reshape(shape)
    values = values.copy()
    if grid is None:
        return header, values
    if tuple(grid.shape) != shape:
        raise ValueError("grid shape does not match the stored field")
    cls = VectorField if header["kind"] == "vector" else ScalarField
    return cls(grid, values, name=header["name"], time=header["time"])
