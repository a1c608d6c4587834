"""Binary storage for per-sample gradient feature matrices.

A feature file is a fixed 22-byte little-endian header followed by the
row-major float32 payload.  The per-sample metadata (stable ids, source
tags, optional scores) lives in a JSON-lines sidecar next to the matrix so
the payload itself stays directly memory-mappable.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TGCS"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1

# magic, version (u32), n_samples (u64), dim (u32), dtype code (u8),
# checkpoint count (u8) -- 22 bytes total, little-endian throughout
_HEADER = struct.Struct("<4sIQIBB")
HEADER_SIZE = _HEADER.size

MANIFEST_SUFFIX = ".manifest.jsonl"


class FeatureFileError(ValueError):
    """Raised for malformed feature files or invalid matrices."""


def manifest_path(path):
    return str(path) + MANIFEST_SUFFIX


@dataclass(frozen=True)
class FeatureFileHeader:
    magic: bytes
    format_version: int
    n_samples: int
    dim: int
    dtype_code: int
    checkpoint_count: int

    def validate(self, path="") -> None:
        if self.magic != MAGIC:
            raise FeatureFileError(f"{path}: bad magic {self.magic!r}")
        if self.format_version != FORMAT_VERSION:
            raise FeatureFileError(
                f"{path}: unsupported format version {self.format_version}")
        if self.dtype_code != DTYPE_FLOAT32:
            raise FeatureFileError(f"{path}: unknown dtype code {self.dtype_code}")

    @property
    def payload_bytes(self) -> int:
        return self.n_samples * self.dim * 4


def read_header(path) -> FeatureFileHeader:
    """Read and validate only the 22-byte header."""
    with open(str(path), "rb") as fh:
        head = fh.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise FeatureFileError(f"{path}: file shorter than header")
    header = FeatureFileHeader(*_HEADER.unpack(head))
    header.validate(path)
    return header


def stream_feature_rows(path, chunk_rows: int = 256):
    """Yield (row_start, float32 block) without loading the whole payload.

    Validates the header, total size, and per-block finiteness; the caller
    handles the manifest separately (see read_manifest).
    """
    header = read_header(path)
    if os.path.getsize(str(path)) != HEADER_SIZE + header.payload_bytes:
        raise FeatureFileError(
            f"{path}: payload size does not match header "
            f"({os.path.getsize(str(path)) - HEADER_SIZE} of {header.payload_bytes} bytes)")
    row_bytes = header.dim * 4
    with open(str(path), "rb") as fh:
        fh.seek(HEADER_SIZE)
        for start in range(0, header.n_samples, chunk_rows):
            rows = min(chunk_rows, header.n_samples - start)
            block = np.frombuffer(fh.read(rows * row_bytes), dtype="<f4")
            block = block.reshape(rows, header.dim)
            if not np.all(np.isfinite(block)):
                raise FeatureFileError(f"{path}: non-finite entries near row {start}")
            yield start, block


@dataclass
class GradientFeatureMatrix:
    """Dense n_samples x dim matrix of float32 gradient features.

    ``checkpoint_count`` records how many warmup checkpoints were averaged
    into the stored features (provenance only; the data is pre-combined).
    """

    data: np.ndarray
    checkpoint_count: int = 1

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise FeatureFileError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise FeatureFileError(f"feature matrix must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FeatureFileError("feature matrix contains non-finite entries")
        if not 1 <= int(self.checkpoint_count) <= 255:
            raise FeatureFileError(f"checkpoint_count out of range: {self.checkpoint_count}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "checkpoint_count", int(self.checkpoint_count))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    source_dataset: str
    score: float | None = None


@dataclass
class SampleManifest:
    """Per-sample metadata aligned with the rows of a feature matrix."""

    records: list[SampleRecord] = field(default_factory=list)

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise FeatureFileError("manifest sample_id values are not unique")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sample_ids(self) -> list[int]:
        return [r.sample_id for r in self.records]

    @property
    def scores(self) -> list[float | None]:
        return [r.score for r in self.records]

    @property
    def source_datasets(self) -> list[str]:
        return [r.source_dataset for r in self.records]

    @classmethod
    def trivial(cls, n: int, source: str = "unknown") -> "SampleManifest":
        """Manifest with ids 0..n-1, one source tag, no scores."""
        return cls([SampleRecord(i, source) for i in range(n)])


def write_features(matrix: GradientFeatureMatrix, manifest: SampleManifest, path) -> None:
    """Write a feature matrix and its manifest sidecar.

    The matrix payload is row-major little-endian float32; re-reading the
    file yields a bit-identical matrix.  Writing is atomic (temp file plus
    rename) so readers never observe a half-written file.
    """
    if len(manifest) != matrix.n_samples:
        raise FeatureFileError(
            f"manifest has {len(manifest)} records for {matrix.n_samples} samples"
        )
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        matrix.n_samples,
        matrix.dim,
        DTYPE_FLOAT32,
        matrix.checkpoint_count,
    )
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()

    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, str(path))

    mtmp = manifest_path(path) + ".tmp"
    with open(mtmp, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            obj = {
                "sample_id": rec.sample_id,
                "source_dataset": rec.source_dataset,
                "score": rec.score,
            }
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    os.replace(mtmp, manifest_path(path))


def read_features(path) -> tuple[GradientFeatureMatrix, SampleManifest]:
    """Read a feature file and its manifest, re-validating all invariants.

    Raises ``FeatureFileError`` on bad magic, unknown version or dtype,
    truncated or oversized payloads, non-finite entries, or a manifest
    that does not line up with the matrix.
    """
    with open(str(path), "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise FeatureFileError(f"{path}: file shorter than header")
        magic, version, n_samples, dim, dtype_code, ckpt = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FeatureFileError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FeatureFileError(f"{path}: unsupported format version {version}")
        if dtype_code != DTYPE_FLOAT32:
            raise FeatureFileError(f"{path}: unknown dtype code {dtype_code}")
        expected = n_samples * dim * 4
        payload = fh.read(expected + 1)
        if len(payload) < expected:
            raise FeatureFileError(
                f"{path}: truncated payload ({len(payload)} of {expected} bytes)"
            )
        if len(payload) > expected:
            raise FeatureFileError(f"{path}: trailing bytes after payload")

    data = np.frombuffer(payload, dtype="<f4").reshape(n_samples, dim)
    matrix = GradientFeatureMatrix(data, checkpoint_count=ckpt)

    manifest = read_manifest(manifest_path(path))
    if len(manifest) != matrix.n_samples:
        raise FeatureFileError(
            f"{path}: manifest has {len(manifest)} records for {matrix.n_samples} samples"
        )
    return matrix, manifest


def read_manifest(path) -> SampleManifest:
    records = []
    with open(str(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    SampleRecord(
                        sample_id=int(obj["sample_id"]),
                        source_dataset=str(obj["source_dataset"]),
                        score=None if obj.get("score") is None else float(obj["score"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FeatureFileError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    return SampleManifest(records)


def concat_feature_files(paths) -> tuple[GradientFeatureMatrix, SampleManifest]:
    """Concatenate feature files row-wise, in argument order.

    All files must agree on dim and checkpoint_count; sample ids must stay
    unique across the union.
    """
    paths = list(paths)
    if not paths:
        raise FeatureFileError("no feature files given")
    matrices, manifests = [], []
    for p in paths:
        m, mf = read_features(p)
        matrices.append(m)
        manifests.append(mf)
    dim = matrices[0].dim
    ckpt = matrices[0].checkpoint_count
    for p, m in zip(paths, matrices):
        if m.dim != dim:
            raise FeatureFileError(f"{p}: dim {m.dim} does not match {dim}")
        if m.checkpoint_count != ckpt:
            raise FeatureFileError(
                f"{p}: checkpoint_count {m.checkpoint_count} does not match {ckpt}"
            )
    records = [rec for mf in manifests for rec in mf.records]
    seen = set()
    for rec in records:
        if rec.sample_id in seen:
            raise FeatureFileError(f"duplicate sample_id {rec.sample_id} across inputs")
        seen.add(rec.sample_id)
    data = np.vstack([m.data for m in matrices])
    return GradientFeatureMatrix(data, checkpoint_count=ckpt), SampleManifest(records)
