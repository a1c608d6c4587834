"""Computable forms of the selector's approximation theory, plus the
exhaustive oracle the test suite measures greedy selection against.

For a candidate pool whose feature norms are bounded by G and a budget M,
the regularized set objective is weakly submodular with ratio
gamma = lam / (lam + M * G^2); greedy pursuit with tolerance-driven
stopping then selects at most (optimal_size / gamma) * ln(l_max / tol)
elements.  Both quantities are evaluated from measured data here and
checked empirically by the test suite.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._util import as_float64_rows, column_mean, l2_norm
from .baselines import global_omp_select
from .select import (OmpConfig, _blas_limit, _solve_weights_impl, clustered_select,
                     matching_error, omp_select, solve_weights)

BRUTE_FORCE_GUARD = 10**6


@dataclass(frozen=True)
class SubmodularityReport:
    gradient_bound: float      # max feature row norm over the pool
    budget: int
    lam: float
    gamma: float               # lam / (lam + budget * gradient_bound^2)
    l_max: float               # empty-selection error, i.e. the target norm
    size_bound: float | None   # greedy size bound at the run's tolerance

    def to_dict(self) -> dict:
        return {
            "gradient_bound": self.gradient_bound,
            "budget": self.budget,
            "lam": self.lam,
            "gamma": self.gamma,
            "l_max": self.l_max,
            "size_bound": self.size_bound,
        }


def gamma_bound(lam: float, budget: int, gradient_bound: float) -> float:
    """Weak-submodularity ratio lam / (lam + budget * gradient_bound^2)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if gradient_bound < 0:
        raise ValueError("gradient_bound must be >= 0")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    return lam / (lam + budget * gradient_bound * gradient_bound)


def coreset_size_bound(optimal_size: int, gamma: float, l_max: float, tol: float) -> float:
    """(optimal_size / gamma) * ln(l_max / tol), the greedy size guarantee."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if tol >= l_max:
        raise ValueError(f"tol {tol} must be below l_max {l_max}")
    if optimal_size < 1:
        raise ValueError("optimal_size must be >= 1")
    return (optimal_size / gamma) * math.log(l_max / tol)


def build_submodularity_report(features, budget: int, lam: float, tol: float,
                               target=None, achieved_size: int | None = None) -> SubmodularityReport:
    """Measure G from data and evaluate the formulas for one run.

    ``size_bound`` plugs the achieved selection size in place of the
    unknown optimal size, and is omitted when lam or tol make the formula
    undefined.
    """
    X = as_float64_rows(features)
    G = float(np.max(np.sqrt(np.sum(X * X, axis=1))))
    t = column_mean(X) if target is None else np.asarray(target, dtype=np.float64)
    l_max = l2_norm(t)
    gamma = gamma_bound(lam, budget, G) if lam > 0 else None
    size_bound = None
    if gamma is not None and achieved_size is not None and achieved_size >= 1 \
            and 0.0 < tol < l_max:
        size_bound = coreset_size_bound(achieved_size, gamma, l_max, tol)
    return SubmodularityReport(
        gradient_bound=G,
        budget=int(budget),
        lam=lam,
        gamma=float("nan") if gamma is None else gamma,
        l_max=l_max,
        size_bound=size_bound,
    )


def brute_force_optimal(cluster_features, target, budget: int, lam: float,
                        nonnegative: bool = True):
    """Exhaustive minimizer of the reported error over subsets of size <= budget.

    Solves weights exactly for every subset and returns
    (best_indices, best_weights, best_error) with
    error = matching_error + lam * ||w||^2.  Guarded so the enumeration
    stays under {BRUTE_FORCE_GUARD} subsets at the largest size.
    """
    X = as_float64_rows(cluster_features)
    n = X.shape[0]
    t = np.asarray(target, dtype=np.float64)
    budget = int(budget)
    if not 1 <= budget <= n:
        raise ValueError(f"budget must be in [1, {n}], got {budget}")
    if math.comb(n, budget) > BRUTE_FORCE_GUARD:
        raise ValueError(
            f"C({n}, {budget}) = {math.comb(n, budget)} exceeds the enumeration guard"
        )
    best_err = l2_norm(t)          # empty selection
    best_idx: tuple = ()
    best_w = np.zeros(0)
    with _blas_limit(limits=1):
        for size in range(1, budget + 1):
            for subset in combinations(range(n), size):
                rows = X[list(subset)]
                w = _solve_weights_impl(rows, t, lam, nonnegative)
                err = matching_error(w, rows, t) + lam * float(np.sum(w * w))
                if err < best_err - 1e-15 * max(1.0, best_err):
                    best_err = err
                    best_idx = subset
                    best_w = w
    return (
        np.asarray(best_idx, dtype=np.int64),
        np.asarray(best_w, dtype=np.float64),
        float(best_err),
    )


def min_augmented_error(subset_features, target, lam: float, nonnegative: bool = False) -> float:
    """sqrt(min_w ||G w - t||^2 + lam ||w||^2) for a fixed support.

    The set function the theory bounds is the complement of this value;
    it can only decrease as the support grows.
    """
    X = as_float64_rows(subset_features)
    t = np.asarray(target, dtype=np.float64)
    if X.shape[0] == 0:
        return l2_norm(t)
    w = solve_weights(X, t, lam, nonnegative)
    resid = w @ X - t
    return float(np.sqrt(np.sum(resid * resid) + lam * np.sum(w * w)))


def empirical_submodularity_ratio(features, target, lam: float, rng: np.random.Generator,
                                  max_set: int = 6) -> tuple[float, float]:
    """One random check of the weak-submodularity inequality.

    Draws disjoint sets S and T, compares the summed single-element gains
    against the joint gain of adding T, and returns (ratio, gamma) where
    gamma uses the pool's measured norm bound and |S| + |T| as the budget.
    Gains use the squared augmented error, the objective the ratio theory
    is stated for.
    """
    X = as_float64_rows(features)
    n = X.shape[0]
    t = np.asarray(target, dtype=np.float64)
    s_size = int(rng.integers(0, max_set))
    t_size = int(rng.integers(1, max_set))
    perm = rng.permutation(n)
    S = list(perm[:s_size])
    T = list(perm[s_size:s_size + t_size])

    def f(support: list[int]) -> float:
        e = min_augmented_error(X[support] if support else np.zeros((0, X.shape[1])), t, lam)
        return -e * e

    base = f(S)
    joint_gain = f(sorted(S + T)) - base
    single_gains = sum(f(sorted(S + [e])) - base for e in T)
    G = float(np.max(np.sqrt(np.sum(X * X, axis=1))))
    gamma = gamma_bound(lam, s_size + t_size, G)
    if joint_gain <= 1e-12:
        return math.inf, gamma
    return single_gains / joint_gain, gamma


def cluster_vs_global_report(features, assignment, budgets, lam: float = 1e-4,
                             tol: float = 0.0, nonnegative: bool = True) -> dict:
    """Head-to-head wall time and achieved error, clustered vs one global pursuit.

    Runs both selectors at each total budget and reports wall seconds,
    dataset-level matching error, and selected sizes.  Timing fields vary
    run to run by nature; everything else is deterministic.
    """
    X = as_float64_rows(features)
    budgets = [int(b) for b in (budgets if np.iterable(budgets) else [budgets])]
    rows = []
    for M in budgets:
        t0 = time.perf_counter()
        clustered = clustered_select(X, assignment, M, lam=lam, tol=tol,
                                     nonnegative=nonnegative)
        t1 = time.perf_counter()
        global_res = global_omp_select(X, M, lam=lam, tol=tol, nonnegative=nonnegative)
        t2 = time.perf_counter()
        rows.append({
            "budget": M,
            "clustered": {
                "wall_time_s": t1 - t0,
                "global_error": clustered.global_error,
                "selected": int(clustered.indices.size),
            },
            "global": {
                "wall_time_s": t2 - t1,
                "global_error": global_res.global_error,
                "selected": int(global_res.indices.size),
            },
            "wall_time_ratio": (t1 - t0) / max(t2 - t1, 1e-12),
        })
    return {
        "schema": "cluster-vs-global-v1",
        "machine": {
            "platform": platform.platform(),
            "python": platform.python_version(),
            "processor": platform.processor() or "unknown",
        },
        "lam": lam,
        "tol": tol,
        "rows": rows,
    }


def save_report(report: dict, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
