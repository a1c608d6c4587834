"""Synthetic gradient-feature datasets with known cluster structure.

Blob generators drive the test and acceptance suites: cluster centers are
drawn uniformly in a cube, samples are isotropic Gaussian around their
center, and each sample's manifest score is its distance to the true
center (a stand-in for an external per-sample score such as perplexity).
Supports deliberately imbalanced cluster sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .store import GradientFeatureMatrix, SampleManifest, SampleRecord


@dataclass(frozen=True)
class BlobSpec:
    n_clusters: int
    samples_per_cluster: tuple
    dim: int
    center_scale: float = 10.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in np.atleast_1d(self.samples_per_cluster))
        if len(sizes) == 1 and self.n_clusters > 1:
            sizes = sizes * self.n_clusters
        object.__setattr__(self, "samples_per_cluster", sizes)
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if len(sizes) != self.n_clusters:
            raise ValueError(
                f"{len(sizes)} cluster sizes given for {self.n_clusters} clusters"
            )
        if any(s < 1 for s in sizes):
            raise ValueError("every cluster needs at least one sample")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def n_samples(self) -> int:
        return sum(self.samples_per_cluster)


def generate_blobs(spec: BlobSpec):
    """Sample a blob dataset; deterministic per spec.seed.

    Returns (GradientFeatureMatrix, SampleManifest, true_labels).  Source
    tags are "blob00", "blob01", ... so per-source bookkeeping can be
    checked against the generating partition.
    """
    rng = np.random.default_rng(spec.seed)
    half = spec.center_scale / 2.0
    centers = rng.uniform(-half, half, size=(spec.n_clusters, spec.dim))
    rows = []
    labels = []
    scores = []
    for k, size in enumerate(spec.samples_per_cluster):
        noise = rng.standard_normal((size, spec.dim)) * spec.noise_sigma
        pts = centers[k] + noise
        rows.append(pts)
        labels.extend([k] * size)
        scores.extend(np.sqrt(np.sum(noise * noise, axis=1)).tolist())
    data = np.vstack(rows).astype(np.float32)
    matrix = GradientFeatureMatrix(data)
    records = [
        SampleRecord(sample_id=i, source_dataset=f"blob{labels[i]:02d}", score=scores[i])
        for i in range(spec.n_samples)
    ]
    return matrix, SampleManifest(records), np.asarray(labels, dtype=np.int64)


def write_true_labels(labels, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump({"schema": "true-labels-v1", "labels": np.asarray(labels).tolist()}, fh)
        fh.write("\n")


def read_true_labels(path) -> np.ndarray:
    with open(str(path), encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != "true-labels-v1":
        raise ValueError(f"{path}: not a true-labels file")
    return np.asarray(obj["labels"], dtype=np.int64)
