"""Budgeted greedy gradient matching inside clusters.

The selector allocates the global budget across clusters proportionally
to cluster size (largest-remainder rounding), then runs a regularized
orthogonal matching pursuit per cluster: repeatedly add the candidate
whose weight-gradient is largest in magnitude, refit all weights by
(nonnegative) ridge least squares, and stop on budget or tolerance.

Two error quantities appear throughout:

* matching error  ||sum_z w_z g_z - target||_2  (what the pipeline reports)
* augmented error sqrt(matching_error^2 + lam * ||w||^2), the norm of the
  ridge-augmented residual.  This is the quantity the weight solve
  minimizes (squared), the per-iteration trace records, and the tolerance
  compares against.  It never increases as the selected set grows, and it
  reduces to the matching error when lam = 0.

Reported per-cluster ``final_error`` keeps the additive form
matching_error + lam * ||w||^2.
"""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._util import as_float64_rows, column_mean, l2_norm
from .cluster import ClusterAssignment

try:  # threaded BLAS is counterproductive on the many small solves below
    from threadpoolctl import threadpool_limits as _blas_limit
except ImportError:  # pragma: no cover
    def _blas_limit(limits=None):
        return contextlib.nullcontext()


class SingularSystemError(np.linalg.LinAlgError):
    """Unregularized weight solve hit a singular Gram matrix (use lam > 0)."""


@dataclass(frozen=True)
class OmpConfig:
    """Per-cluster pursuit settings.

    lam         ridge coefficient (>= 0; required > 0 for rank-deficient data)
    tol         stop once the augmented error drops below this (>= 0)
    max_size    selection budget for the cluster (>= 1)
    nonnegative_weights   constrain weights to w >= 0 (active-set solve)
    """

    lam: float = 1e-4
    tol: float = 0.01
    max_size: int = 1
    nonnegative_weights: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.max_size < 1:
            raise ValueError("max_size must be >= 1")


@dataclass
class OmpResult:
    indices: np.ndarray          # picks, in selection order
    weights: np.ndarray          # aligned with indices
    trace: np.ndarray            # augmented error; trace[0] is the empty-set error
    final_error: float           # matching_error + lam * ||w||^2

    @property
    def iterations(self) -> int:
        return len(self.indices)


@dataclass
class SelectionResult:
    """Union of per-cluster selections plus the dataset-level matching error."""

    indices: np.ndarray
    weights: np.ndarray
    per_cluster: list[dict] = field(default_factory=list)
    global_error: float = 0.0
    config: dict = field(default_factory=dict)


def allocate_budget(cluster_sizes, total: int) -> np.ndarray:
    """Split ``total`` across clusters proportionally to their sizes.

    Uses exact integer largest-remainder rounding: each share is the floor
    of total * size / n plus at most one extra unit.  Remainder ties go to
    the smaller cluster first (then lower index), so marginal units favor
    the under-represented groups the clustering exists to protect.
    """
    sizes = np.asarray(cluster_sizes, dtype=np.int64)
    if sizes.ndim != 1 or sizes.size == 0:
        raise ValueError("cluster_sizes must be a non-empty 1-D sequence")
    if np.any(sizes < 1):
        raise ValueError("every cluster size must be >= 1")
    n = int(sizes.sum())
    total = int(total)
    if total < 0:
        raise ValueError("total budget must be >= 0")
    if total > n:
        raise ValueError(f"budget {total} exceeds population {n}")
    prod = total * sizes
    shares = prod // n
    remainders = prod % n
    extra = total - int(shares.sum())
    if extra > 0:
        order = sorted(range(sizes.size), key=lambda i: (-remainders[i], sizes[i], i))
        for i in order[:extra]:
            shares[i] += 1
    assert int(shares.sum()) == total
    assert np.all(shares <= sizes)
    return shares


def matching_error(weights, subset_features, target) -> float:
    """Euclidean distance between the weighted feature sum and the target."""
    w = np.asarray(weights, dtype=np.float64)
    X = as_float64_rows(subset_features) if np.size(subset_features) else np.zeros((0, np.size(target)))
    t = np.asarray(target, dtype=np.float64)
    if w.shape[0] != X.shape[0]:
        raise ValueError(f"{w.shape[0]} weights for {X.shape[0]} rows")
    if X.shape[0] and X.shape[1] != t.shape[0]:
        raise ValueError(f"feature dim {X.shape[1]} does not match target dim {t.shape[0]}")
    resid = (w @ X if X.shape[0] else np.zeros_like(t)) - t
    return l2_norm(resid)


def _ridge_solve(G: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    """argmin_w ||G w - t||^2 + lam ||w||^2 for columns G (d x m).

    Solves the m x m normal equations when m <= d, otherwise the d x d
    dual system (identical solution for lam > 0, smaller factorization).
    """
    d, m = G.shape
    if lam > 0.0 and m > d:
        H = G @ G.T
        H[np.diag_indices_from(H)] += lam
        return G.T @ cho_solve(cho_factor(H, lower=True, check_finite=False), t,
                               check_finite=False)
    A = G.T @ G
    if lam > 0.0:
        A[np.diag_indices_from(A)] += lam
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        if lam == 0.0:
            raise SingularSystemError(
                "candidate Gram matrix is singular and lam = 0; "
                "set a positive regularization weight"
            ) from exc
        raise
    return cho_solve(factor, G.T @ t, check_finite=False)


def _nnls_ridge(G: np.ndarray, t: np.ndarray, lam: float, warm_passive=None) -> np.ndarray:
    """Active-set solve of argmin_{w >= 0} ||G w - t||^2 + lam ||w||^2.

    Lawson-Hanson style: grow a passive set by the most negative objective
    gradient, solve the unconstrained ridge on it, and step back along the
    segment to the feasible boundary whenever a passive coordinate goes
    nonpositive.  ``warm_passive`` seeds the passive set (the pursuit loop
    passes the previous support), which usually makes the solve one
    factorization instead of many.
    """
    d, m = G.shape
    w = np.zeros(m)
    kkt_scale = max(1.0, 2.0 * float(np.max(np.abs(G.T @ t), initial=0.0)))
    tol_kkt = 1e-11 * kkt_scale

    passive: list[int] = []

    def settle(candidates: list[int]) -> None:
        # restore primal feasibility on the candidate passive set
        nonlocal passive, w
        passive = candidates
        for _ in range(2 * m + 16):
            if not passive:
                w[:] = 0.0
                return
            w_hat = _ridge_solve(G[:, passive], t, lam)
            if np.min(w_hat) > 0.0:
                w[:] = 0.0
                w[passive] = w_hat
                return
            cur = w[passive]
            move = w_hat - cur
            bad = w_hat <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(bad & (move < 0.0), cur / -move, np.inf)
            alpha = float(np.min(steps))
            alpha = min(max(alpha, 0.0), 1.0)
            cur = cur + alpha * move
            cur[bad & (cur < 0.0)] = 0.0
            w[:] = 0.0
            w[passive] = cur
            cutoff = 1e-13 * max(1.0, float(np.max(cur, initial=0.0)))
            keep = [p for p, v in zip(passive, cur) if v > cutoff]
            if len(keep) == len(passive):
                # guard against stalling on exact-zero steps
                keep = [p for p, b in zip(passive, bad) if not b]
            passive = keep
        raise RuntimeError("nonnegative ridge solve failed to restore feasibility")

    if warm_passive:
        settle(sorted(set(int(i) for i in warm_passive)))

    for _ in range(4 * m + 32):
        grad = 2.0 * (G.T @ (G @ w - t) + lam * w)
        grad[passive] = 0.0
        j = int(np.argmin(grad))
        if grad[j] >= -tol_kkt:
            return w
        settle(sorted(passive + [j]))
    raise RuntimeError("nonnegative ridge solve did not converge")


def _solve_weights_impl(X, t, lam, nonnegative, warm_passive=None) -> np.ndarray:
    G = X.T
    if nonnegative:
        return _nnls_ridge(G, t, lam, warm_passive=warm_passive)
    return _ridge_solve(G, t, lam)


def solve_weights(subset_features, target, lam: float, nonnegative: bool = True,
                  warm_passive=None) -> np.ndarray:
    """Best weights for a fixed subset: argmin ||G w - target||^2 + lam ||w||^2.

    With ``nonnegative`` the same objective is minimized subject to w >= 0;
    at the solution every positive coordinate has (numerically) zero
    objective gradient and every clamped coordinate has nonnegative gradient.
    """
    X = as_float64_rows(subset_features)
    if X.shape[0] == 0:
        raise ValueError("subset must be non-empty")
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (X.shape[1],):
        raise ValueError(f"target shape {t.shape} does not match feature dim {X.shape[1]}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    with _blas_limit(limits=1):
        return _solve_weights_impl(X, t, lam, nonnegative, warm_passive=warm_passive)


def _augmented_error(resid: np.ndarray, w: np.ndarray, lam: float) -> float:
    return float(np.sqrt(np.sum(resid * resid) + lam * np.sum(w * w)))


def omp_select(cluster_features, target, config: OmpConfig) -> OmpResult:
    """Greedy pursuit of a weighted subset matching ``target``.

    Each round scores every unselected candidate by the magnitude of the
    objective gradient with respect to its (currently zero) weight --
    twice the correlation with the running residual -- adds the argmax
    (ties to the lowest index), and refits all weights.  Stops at the
    budget, when the augmented error drops below ``config.tol``, or when
    the cluster is exhausted; selecting the whole cluster is a legal
    terminal state.
    """
    X = as_float64_rows(cluster_features)
    n, d = X.shape
    if n == 0:
        raise ValueError("cluster must be non-empty")
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (d,):
        raise ValueError(f"target shape {t.shape} does not match feature dim {d}")

    G = X.T
    picked: list[int] = []
    taken = np.zeros(n, dtype=bool)
    w = np.zeros(0)
    resid = -t
    err = _augmented_error(resid, w, config.lam)
    trace = [err]

    with _blas_limit(limits=1):
        while len(picked) < config.max_size and len(picked) < n and err >= config.tol:
            corr = np.abs(2.0 * (X @ resid))
            corr[taken] = -1.0
            j = int(np.argmax(corr))
            picked.append(j)
            taken[j] = True
            warm = [k for k, v in enumerate(w) if v > 0.0]
            w = _solve_weights_impl(X[picked], t, config.lam,
                                    config.nonnegative_weights, warm_passive=warm)
            resid = G[:, picked] @ w - t
            err = _augmented_error(resid, w, config.lam)
            trace.append(err)

    final = matching_error(w, X[picked], t) + config.lam * float(np.sum(w * w)) \
        if picked else l2_norm(t)
    return OmpResult(
        indices=np.asarray(picked, dtype=np.int64),
        weights=np.asarray(w, dtype=np.float64),
        trace=np.asarray(trace, dtype=np.float64),
        final_error=final,
    )


def clustered_select(features, assignment: ClusterAssignment, total_budget: int,
                     lam: float = 1e-4, tol: float = 0.01,
                     nonnegative: bool = True) -> SelectionResult:
    """Full budgeted selection: allocate, pursue per cluster, union.

    Every cluster with a nonzero share runs a pursuit against its own
    centroid; clusters rounded to zero contribute nothing.  The returned
    ``global_error`` evaluates the union's weighted feature sum against
    the dataset mean.
    """
    X = as_float64_rows(features)
    n = X.shape[0]
    if assignment.labels.shape[0] != n:
        raise ValueError(
            f"assignment covers {assignment.labels.shape[0]} samples, features have {n}"
        )
    if assignment.centroids.shape[1] != X.shape[1]:
        raise ValueError("assignment centroid dim does not match features")
    if total_budget > n:
        raise ValueError(f"budget {total_budget} exceeds dataset size {n}")

    shares = allocate_budget(assignment.sizes, total_budget)
    all_indices: list[np.ndarray] = []
    all_weights: list[np.ndarray] = []
    per_cluster = []
    for k in range(assignment.k):
        if shares[k] == 0:
            continue
        members = np.flatnonzero(assignment.labels == k)
        cfg = OmpConfig(lam=lam, tol=tol, max_size=int(shares[k]),
                        nonnegative_weights=nonnegative)
        res = omp_select(X[members], assignment.centroids[k], cfg)
        all_indices.append(members[res.indices])
        all_weights.append(res.weights)
        per_cluster.append({
            "cluster": int(k),
            "share": int(shares[k]),
            "indices": members[res.indices].tolist(),
            "weights": res.weights.tolist(),
            "final_error": res.final_error,
            "iterations": res.iterations,
        })

    indices = np.concatenate(all_indices) if all_indices else np.zeros(0, dtype=np.int64)
    weights = np.concatenate(all_weights) if all_weights else np.zeros(0)
    global_error = matching_error(weights, X[indices], column_mean(X))
    return SelectionResult(
        indices=indices,
        weights=weights,
        per_cluster=per_cluster,
        global_error=global_error,
        config={"total_budget": int(total_budget), "lam": lam, "tol": tol,
                "nonnegative": nonnegative, "k": int(assignment.k)},
    )


def save_selection(result: SelectionResult, path, method: str, config_echo=None) -> None:
    """Serialize a selection to JSON (sorted keys, so equal runs give equal bytes)."""
    obj = {
        "schema": "selection-result-v1",
        "method": method,
        "indices": np.asarray(result.indices).tolist(),
        "weights": np.asarray(result.weights).tolist(),
        "per_cluster": result.per_cluster,
        "global_error": result.global_error,
        "config": {**result.config, **(config_echo or {})},
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_selection(path) -> dict:
    with open(str(path), encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != "selection-result-v1":
        raise ValueError(f"{path}: not a selection result file")
    return obj
