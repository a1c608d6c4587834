"""Shared numeric helpers with fixed-order float64 reductions."""

from __future__ import annotations

import numpy as np


def as_float64_rows(features) -> np.ndarray:
    """Feature rows as a float64 2-D array (accepts GradientFeatureMatrix or array)."""
    data = getattr(features, "data", features)
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {X.shape}")
    return X


def column_mean(X: np.ndarray) -> np.ndarray:
    """Column mean in float64; every caller that needs the dataset mean
    gradient goes through here so equal inputs give bit-equal targets."""
    X = np.asarray(X, dtype=np.float64)
    return np.add.reduce(X, axis=0) / X.shape[0]


def l2_norm(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(x * x)))


def sq_dist_to_centroids(X: np.ndarray, C: np.ndarray, x2: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances (n x k), float64, clipped at zero.

    ``x2`` may carry precomputed squared row norms of X.
    """
    if x2 is None:
        x2 = np.sum(X * X, axis=1)
    c2 = np.sum(C * C, axis=1)
    d2 = x2[:, None] - 2.0 * (X @ C.T) + c2[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2
