"""Writer for the gradient-feature binary container and its manifest.

Implements the wire format from scratch (22-byte little-endian header,
row-major float32 payload, JSON-lines manifest sidecar) so files cross
the package boundary as bytes, not shared code.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_HEADER = struct.Struct("<4sIQIBB")
MAGIC = b"TGCS"
VERSION = 1
DTYPE_FLOAT32 = 1


def write_matrix(data: np.ndarray, path, checkpoint_count: int = 1) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"need a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    with open(str(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.shape[0], arr.shape[1],
                              DTYPE_FLOAT32, checkpoint_count))
        fh.write(arr.tobytes())


def write_manifest(records, path) -> None:
    """records: iterable of (sample_id, source_dataset, score-or-None)."""
    with open(str(path) + ".manifest.jsonl", "w", encoding="utf-8") as fh:
        for sample_id, source, score in records:
            obj = {"sample_id": int(sample_id), "source_dataset": str(source),
                   "score": None if score is None else float(score)}
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
