"""CWF1 field files and deterministic text output.

CWF1 layout: magic bytes ``CWF1``, u32 rank, u32 dims[rank], then the values
as little-endian f64 in row-major order.  Writers below are byte-deterministic:
JSON is sorted and uses repr floats, CSV uses %.17g, and no timestamps appear
anywhere (timings go to a separate sidecar so runs stay bit-comparable).
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"CWF1"


def write_field(path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_field(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValidationError(f"{path}: not a CWF1 file")
    if len(raw) < 8:
        raise ValidationError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank < 1 or rank > 8:
        raise ValidationError(f"{path}: implausible rank {rank}")
    if len(raw) < 8 + 4 * rank:
        raise ValidationError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    count = int(np.prod(dims))
    start = 8 + 4 * rank
    if len(raw) != start + 8 * count:
        raise ValidationError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(raw[start:], dtype="<f8").astype(float).reshape(dims)


def dump_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def dump_jsonl(path, rows) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True))
            f.write("\n")


def write_profile_csv(path, columns: dict) -> None:
    """1-D slices as plot-ready CSV; columns is an ordered name -> array map."""
    names = list(columns)
    rows = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        for row in rows:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def stable_hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]
