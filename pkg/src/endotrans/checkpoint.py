"""Deterministic checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a canonical
JSON header, then the raw array buffers back to back.  Arrays are stored
little-endian, C-order, sorted by name, so saving the same content twice
produces byte-identical files (save -> load -> save round-trips exactly).

The header carries the array directory plus free-form ``meta`` (epoch, seed,
config hash, ...), making the file self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"ETCKPT01"


def _canonical_dtype(arr: np.ndarray) -> np.ndarray:
    """Ensure little-endian, contiguous C-order storage."""
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    return np.ascontiguousarray(arr, dtype=dt)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    """Write arrays plus metadata; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    directory = []
    buffers = []
    offset = 0
    for name in sorted(arrays):
        arr = _canonical_dtype(np.asarray(arrays[name]))
        raw = arr.tobytes()
        directory.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": directory}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in buffers:
            fh.write(raw)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back ``(arrays, meta)`` from a container written by :func:`save_checkpoint`."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValidationError(f"{path}: corrupt checkpoint header: {exc}") from exc
        blob = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise ValidationError(
                f"{path}: truncated checkpoint (array {entry['name']!r} is incomplete)"
            )
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        arrays[entry["name"]] = arr
    return arrays, header["meta"]


def read_meta(path: str | Path) -> dict:
    """Metadata only, without loading the array payload."""
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        return json.loads(fh.read(header_len).decode("utf-8"))["meta"]
