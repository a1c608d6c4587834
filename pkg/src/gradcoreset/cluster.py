"""Seeded k-means over gradient features.

Lloyd iterations from a k-means++ start.  Centroids double as the
per-cluster matching targets downstream, so the final centroids are
recomputed as exact member means after the last assignment.  All distance
work happens in float64 with fixed reduction order; ties in assignments
break to the lowest cluster index, which keeps runs reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._util import as_float64_rows, column_mean, sq_dist_to_centroids


@dataclass
class ClusterAssignment:
    """Labels, centroids, member counts and total inertia of one clustering."""

    labels: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    inertia: float

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        k = self.centroids.shape[0]
        if self.sizes.shape != (k,):
            raise ValueError("sizes length does not match centroid count")
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= k:
            raise ValueError("labels out of range")
        counts = np.bincount(self.labels, minlength=k)
        if not np.array_equal(counts, self.sizes):
            raise ValueError("sizes do not match label counts")
        if self.inertia < 0:
            raise ValueError("inertia must be nonnegative")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Unit-l2 rows; zero rows pass through unchanged."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.sqrt(np.sum(X * X, axis=1))
    norms[norms == 0.0] = 1.0
    return X / norms[:, None]


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen centroid
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))
    return centroids


def _member_means(X: np.ndarray, labels: np.ndarray, k: int, fallback: np.ndarray) -> np.ndarray:
    means = np.empty((k, X.shape[1]))
    for j in range(k):
        members = X[labels == j]
        if members.shape[0] == 0:
            means[j] = fallback[j]
        else:
            means[j] = column_mean(members)
    return means


def kmeans(
    features,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    normalize: bool = False,
    init_centroids: np.ndarray | None = None,
) -> ClusterAssignment:
    """Cluster feature rows into k groups.

    Parameters
    ----------
    features : GradientFeatureMatrix or (n, d) array
    k : number of clusters, 1 <= k <= n
    seed : seeds the k-means++ start; fixed (features, k, seed) gives identical labels
    max_iters : Lloyd iteration cap (>= 1)
    tol : stop when the largest centroid shift drops below this (>= 0)
    normalize : cluster unit-l2 rows instead of raw rows
    init_centroids : explicit (k, d) start, bypassing k-means++.  Intended for
        reproducibility tests that derive the start from sample ids rather
        than row positions.

    Emptied clusters are re-seeded to the point farthest from its nearest
    centroid, so every returned cluster has at least one member.
    """
    X = as_float64_rows(features)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples n={n}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if normalize:
        X = normalize_rows(X)

    if init_centroids is not None:
        centroids = np.array(init_centroids, dtype=np.float64)
        if centroids.shape != (k, X.shape[1]):
            raise ValueError(f"init_centroids must have shape ({k}, {X.shape[1]})")
    else:
        centroids = _plusplus_init(X, k, np.random.default_rng(seed))

    x2 = np.sum(X * X, axis=1)
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d2 = sq_dist_to_centroids(X, centroids, x2=x2)
        labels = np.argmin(d2, axis=1).astype(np.int64)
        labels = _fix_empty(X, labels, centroids, k, x2=x2)
        inertia = float(np.sum(np.sum((X - centroids[labels]) ** 2, axis=1)))
        if inertia > prev_inertia * (1.0 + 1e-12) + 1e-12:
            raise RuntimeError("inertia increased between Lloyd iterations")
        prev_inertia = inertia
        new_centroids = _member_means(X, labels, k, centroids)
        shift = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if shift < tol:
            break

    # final pass: assign against the converged centroids, then make each
    # centroid the exact mean of its members so downstream targets match
    d2 = sq_dist_to_centroids(X, centroids, x2=x2)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    labels = _fix_empty(X, labels, centroids, k, x2=x2)
    centroids = _member_means(X, labels, k, centroids)
    sizes = np.bincount(labels, minlength=k)
    inertia = float(np.sum(np.sum((X - centroids[labels]) ** 2, axis=1)))
    return ClusterAssignment(labels, centroids, sizes, inertia)


def _fix_empty(X, labels, centroids, k, x2=None):
    """Relabel the farthest point into each empty cluster (ascending order)."""
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return labels
    labels = labels.copy()
    taken = np.zeros(X.shape[0], dtype=bool)
    for j in empty:
        d2 = sq_dist_to_centroids(X, centroids, x2=x2).min(axis=1)
        # do not steal a point that is its cluster's only member
        counts = np.bincount(labels, minlength=k)
        d2[taken | (counts[labels] <= 1)] = -1.0
        pick = int(np.argmax(d2))
        labels[pick] = j
        centroids[j] = X[pick]
        taken[pick] = True
    return labels


def nearest_centroid(assignment: ClusterAssignment, point: np.ndarray) -> int:
    """Index of the closest centroid (squared Euclidean, ties to lowest index)."""
    p = np.asarray(point, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != assignment.centroids.shape[1]:
        raise ValueError(
            f"point length {p.shape} does not match centroid dim {assignment.centroids.shape[1]}"
        )
    d2 = sq_dist_to_centroids(p[None, :], assignment.centroids)[0]
    return int(np.argmin(d2))


def save_assignment(assignment: ClusterAssignment, path, centroids_path, config_echo=None) -> None:
    """Write labels/sizes/inertia as JSON; centroids go to a feature file.

    The centroid path is stored relative to the assignment file so output
    trees compare byte-identical regardless of where a run landed.
    """
    import os

    from .store import GradientFeatureMatrix, SampleManifest, write_features

    cmat = GradientFeatureMatrix(assignment.centroids.astype(np.float32))
    write_features(cmat, SampleManifest.trivial(assignment.k, source="centroids"), centroids_path)
    rel = os.path.relpath(str(centroids_path), os.path.dirname(os.path.abspath(str(path))))
    obj = {
        "schema": "cluster-assignment-v1",
        "labels": assignment.labels.tolist(),
        "sizes": assignment.sizes.tolist(),
        "inertia": assignment.inertia,
        "centroids_path": rel,
        "config": config_echo or {},
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_assignment(path, features=None) -> ClusterAssignment:
    """Load an assignment file.

    When ``features`` is given, centroids are recomputed as exact member
    means of the feature rows, which reproduces the producing run bit for
    bit (the sidecar matrix is stored in float32 and would otherwise
    round the selection targets).
    """
    import os

    from .store import read_features

    with open(str(path), encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != "cluster-assignment-v1":
        raise ValueError(f"{path}: not a cluster assignment file")
    labels = np.asarray(obj["labels"], dtype=np.int64)
    sizes = np.asarray(obj["sizes"], dtype=np.int64)
    k = sizes.shape[0]
    if features is not None:
        X = as_float64_rows(features)
        if X.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{path}: assignment covers {labels.shape[0]} samples, features have {X.shape[0]}"
            )
        centroids = _member_means(X, labels, k, np.zeros((k, X.shape[1])))
    else:
        cpath = obj["centroids_path"]
        if not os.path.isabs(cpath):
            cpath = os.path.join(os.path.dirname(os.path.abspath(str(path))), cpath)
        cmat, _ = read_features(cpath)
        centroids = cmat.data.astype(np.float64)
    return ClusterAssignment(labels, centroids, sizes, float(obj["inertia"]))
