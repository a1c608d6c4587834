"""Reference selectors run on the same feature inputs as the main pipeline.

uniform          seeded sampling without replacement
hardest          highest manifest score (e.g. perplexity)
lowest_score     lowest manifest score
kcenter_greedy   farthest-first traversal on the feature rows
global_omp       one pursuit over the whole dataset against its mean
"""

from __future__ import annotations

import numpy as np

from ._util import as_float64_rows, column_mean
from .select import OmpConfig, SelectionResult, matching_error, omp_select
from .store import SampleManifest

METHODS = ("uniform", "hardest", "lowest_score", "kcenter_greedy", "global_omp")


def uniform_select(n: int, budget: int, seed: int) -> np.ndarray:
    """``budget`` distinct indices drawn uniformly, deterministic per seed."""
    if budget > n:
        raise ValueError(f"budget {budget} exceeds population {n}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=budget, replace=False)).astype(np.int64)


def score_rank_select(manifest: SampleManifest, budget: int, direction: str) -> np.ndarray:
    """Indices of the ``budget`` most extreme manifest scores, in rank order.

    ``direction`` is "highest" or "lowest"; equal scores break toward the
    lower sample_id.  Every record must carry a score.
    """
    if direction not in ("highest", "lowest"):
        raise ValueError(f"direction must be 'highest' or 'lowest', got {direction!r}")
    n = len(manifest)
    if budget > n:
        raise ValueError(f"budget {budget} exceeds population {n}")
    scores = manifest.scores
    for i, s in enumerate(scores):
        if s is None:
            raise ValueError(f"record {i} (sample_id {manifest.records[i].sample_id}) has no score")
    sign = -1.0 if direction == "highest" else 1.0
    order = sorted(range(n), key=lambda i: (sign * scores[i], manifest.records[i].sample_id))
    return np.asarray(order[:budget], dtype=np.int64)


def kcenter_greedy(features, budget: int, seed: int) -> np.ndarray:
    """Farthest-first traversal from a seeded random start.

    Each round adds the point with the largest distance to the selected
    set (ties to the lowest index).  Returns indices in pick order.
    """
    X = as_float64_rows(features)
    n = X.shape[0]
    if budget > n:
        raise ValueError(f"budget {budget} exceeds population {n}")
    if budget == 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    picked = [start]
    min_d2 = np.sum((X - X[start]) ** 2, axis=1)
    min_d2[start] = -1.0
    for _ in range(budget - 1):
        j = int(np.argmax(min_d2))
        picked.append(j)
        d2 = np.sum((X - X[j]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[j] = -1.0
    return np.asarray(picked, dtype=np.int64)


def covering_radius(features, indices) -> float:
    """max over points of the distance to the nearest selected point."""
    X = as_float64_rows(features)
    sel = X[np.asarray(indices, dtype=np.int64)]
    best = np.full(X.shape[0], np.inf)
    for row in sel:
        np.minimum(best, np.sum((X - row) ** 2, axis=1), out=best)
    return float(np.sqrt(np.max(best)))


def global_omp_select(features, budget: int, lam: float = 1e-4, tol: float = 0.01,
                      nonnegative: bool = True) -> SelectionResult:
    """Pursuit over the entire dataset with its mean as the matching target."""
    X = as_float64_rows(features)
    n = X.shape[0]
    if budget > n:
        raise ValueError(f"budget {budget} exceeds dataset size {n}")
    target = column_mean(X)
    cfg = OmpConfig(lam=lam, tol=tol, max_size=int(budget), nonnegative_weights=nonnegative)
    res = omp_select(X, target, cfg)
    return SelectionResult(
        indices=res.indices,
        weights=res.weights,
        per_cluster=[{
            "cluster": 0,
            "share": int(budget),
            "indices": res.indices.tolist(),
            "weights": res.weights.tolist(),
            "final_error": res.final_error,
            "iterations": res.iterations,
        }],
        global_error=matching_error(res.weights, X[res.indices], target),
        config={"total_budget": int(budget), "lam": lam, "tol": tol,
                "nonnegative": nonnegative, "k": 1},
    )
