"""Binary parameter checkpoints.

Layout (all little-endian):
  8-byte magic  b"OSADPRM\\x01"   (magic + format version)
  uint32        record count
  per record:
    uint16      name length, then UTF-8 name
    uint8       ndim, then ndim * uint32 dims
    float32[]   row-major data

Round-trips are bit-exact; values are stored as float32 regardless of the
in-memory dtype (float64 shadow-mode tensors are narrowed on save).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"OSADPRM\x01"


class CheckpointError(ValueError):
    pass


def save_records(path: str | Path, records: Sequence[tuple[str, np.ndarray]]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(records))]
    seen: set[str] = set()
    for name, arr in records:
        if name in seen:
            raise CheckpointError(f"duplicate record name {name!r}")
        seen.add(name)
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_records(path: str | Path) -> list[tuple[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic or unsupported checkpoint version")
    off = len(MAGIC)
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    records: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        off += 4 * n
        records.append((name, arr))
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes after last record")
    return records


def save_params(path: str | Path, params: Iterable, buffers: Sequence[tuple[str, np.ndarray]] = ()) -> None:
    """Save Params plus any named buffers (e.g. batch-norm running stats)."""
    records = [(p.name, p.data) for p in params]
    records.extend(buffers)
    save_records(path, records)


def load_into(path: str | Path, params: Iterable) -> dict[str, np.ndarray]:
    """Load a checkpoint into matching Params; returns leftover records
    (buffers) keyed by name."""
    by_name = dict(load_records(path))
    for p in params:
        if p.name not in by_name:
            raise CheckpointError(f"checkpoint missing parameter {p.name!r}")
        arr = by_name.pop(p.name)
        if arr.shape != p.data.shape:
            raise CheckpointError(f"parameter {p.name!r}: checkpoint shape {arr.shape} != model shape {p.data.shape}")
        p.data = arr
    return by_name
