"""Command-line front end for the full selection flow.

Subcommands: gen, project, cluster, select, baseline, oracle, report.
Runs are file-based and reproducible: every JSON output embeds the
effective configuration, and rerunning a command with the same inputs
produces byte-identical files.  GRADCORESET_NUM_THREADS caps the BLAS
thread pools (set before numpy loads, so it must be in the environment of
the process, as it is for every subprocess launched by the tests).
"""

import os

_threads = os.environ.get("GRADCORESET_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import contextlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, diagnostics
from ._util import as_float64_rows, column_mean
from .cluster import kmeans, load_assignment, normalize_rows, save_assignment
from .geometry import ProjectionSpec, identity_sign_block, project_rows
from .select import (SelectionResult, clustered_select, load_selection,
                     matching_error, save_selection)
from .store import (GradientFeatureMatrix, SampleManifest, concat_feature_files,
                    manifest_path, read_features, read_header, read_manifest,
                    stream_feature_rows, write_features)
from .synth import BlobSpec, generate_blobs, write_true_labels

DEFAULT_FRACTION = 0.05
DEFAULT_K = 100
DEFAULT_LAM = 1e-4
DEFAULT_TOL = 0.01
DEFAULT_PROJECTION_DIM = 8192


class CliError(RuntimeError):
    pass


@contextlib.contextmanager
def _output_lock(out_dir: Path):
    """Reject concurrent runs against the same output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(
            f"{lock} exists: another run is using this output directory "
            "(remove the file if that run is dead)"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(lock)


def _load_features(paths):
    if len(paths) == 1:
        return read_features(paths[0])
    return concat_feature_files(paths)


def _resolve_budget(n: int, args) -> int:
    if (args.budget is None) == (args.fraction is None):
        raise CliError("exactly one of --budget / --fraction must be given")
    if args.budget is not None:
        return int(args.budget)
    if not 0.0 < args.fraction <= 1.0:
        raise CliError("--fraction must lie in (0, 1]")
    return int(args.fraction * n)


def _run_config(args, budget: int, extra=None) -> dict:
    """The effective run settings; valid as a --config file for reruns."""
    cfg = {
        "features": [str(p) for p in args.features],
        "budget": budget,
        "lam": args.lam,
        "tol": args.tol,
        "seed": args.seed,
        "normalize": bool(getattr(args, "normalize", False)),
    }
    if extra:
        cfg.update(extra)
    return cfg


def cmd_gen(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else [args.samples_per_cluster]
    spec = BlobSpec(
        n_clusters=args.clusters,
        samples_per_cluster=tuple(sizes) if len(sizes) > 1 else (sizes[0],) * args.clusters,
        dim=args.dim,
        center_scale=args.center_scale,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    matrix, manifest, labels = generate_blobs(spec)
    write_features(matrix, manifest, args.out)
    write_true_labels(labels, str(args.out) + ".labels.json")
    print(f"wrote {matrix.n_samples}x{matrix.dim} features to {args.out}")
    return 0


def cmd_project(args) -> int:
    if not args.raw:
        raise CliError("at least one raw gradient file is required")
    header = read_header(args.raw[0])
    manifest = read_manifest(manifest_path(args.raw[0]))
    spec = ProjectionSpec(source_dim=header.dim, target_dim=args.dim, seed=args.seed)
    sign_block = identity_sign_block(spec) if args.sign_pattern == "identity" else None

    # raw gradients stream through in row blocks; only the projected
    # accumulator (n_samples x target_dim) lives in memory
    acc = np.zeros((header.n_samples, args.dim))
    for path in args.raw:
        h = read_header(path)
        if h.dim != header.dim or h.n_samples != header.n_samples:
            raise CliError(f"{path}: shape {h.n_samples}x{h.dim} does not match first input")
        mf = read_manifest(manifest_path(path))
        if mf.sample_ids != manifest.sample_ids:
            raise CliError(f"{path}: sample ids differ from first input")
        for start, block in stream_feature_rows(path, chunk_rows=args.chunk_rows):
            acc[start:start + block.shape[0]] += project_rows(block, spec,
                                                              sign_block=sign_block)
    acc /= len(args.raw)
    out = GradientFeatureMatrix(acc.astype(np.float32), checkpoint_count=len(args.raw))
    write_features(out, manifest, args.out)
    echo = {
        "schema": "projection-config-v1",
        "source_dim": spec.source_dim,
        "target_dim": spec.target_dim,
        "seed": spec.seed,
        "sign_pattern": args.sign_pattern,
        "checkpoints": [str(p) for p in args.raw],
    }
    with open(str(args.out) + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(echo, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"projected {header.n_samples} samples: {header.dim} -> {args.dim} dims")
    return 0


def cmd_cluster(args) -> int:
    matrix, _ = _load_features(args.features)
    assignment = kmeans(matrix, args.k, seed=args.seed, normalize=args.normalize)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {
        "features": [str(p) for p in args.features],
        "k": args.k,
        "seed": args.seed,
        "normalize": args.normalize,
    }
    save_assignment(assignment, out_dir / "assignment.json",
                    out_dir / "centroids.gradf", config_echo=echo)
    print(f"k={assignment.k} inertia={assignment.inertia:.6g} sizes={assignment.sizes.tolist()}")
    return 0


_SELECT_DEFAULTS = {
    "k": DEFAULT_K, "lam": DEFAULT_LAM, "tol": DEFAULT_TOL, "seed": 0,
    "normalize": False, "budget": None, "fraction": None, "features": None,
    "out_dir": None, "assignment": None,
}


def _merge_config(args) -> None:
    """Layer the effective run settings: defaults, then the config file,
    then explicit flags (flags win).  An explicit --budget or --fraction
    flag replaces whichever budget form the config carried."""
    fields = dict(_SELECT_DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(fields)
        if unknown:
            raise CliError(f"{args.config}: unknown config keys {sorted(unknown)}")
        fields.update(loaded)
    if args.budget is not None and args.fraction is None:
        fields["fraction"] = None
    if args.fraction is not None and args.budget is None:
        fields["budget"] = None
    for name, fallback in fields.items():
        if getattr(args, name, None) is None:
            setattr(args, name, fallback)
    if not args.features:
        raise CliError("feature files are required (--features or config)")
    if not args.out_dir:
        raise CliError("an output directory is required (--out-dir or config)")
    if args.budget is None and args.fraction is None:
        args.fraction = DEFAULT_FRACTION


def cmd_select(args) -> int:
    _merge_config(args)
    matrix, manifest = _load_features(args.features)
    X = as_float64_rows(matrix)
    if args.normalize:
        X = normalize_rows(X)
    budget = _resolve_budget(matrix.n_samples, args)
    out_dir = Path(args.out_dir)
    with _output_lock(out_dir):
        run_cfg = _run_config(args, budget, extra={"k": args.k})
        echo = {**run_cfg, "n_samples": matrix.n_samples}
        t0 = time.perf_counter()
        if args.assignment:
            assignment = load_assignment(args.assignment, features=X)
        else:
            assignment = kmeans(X, args.k, seed=args.seed)
        save_assignment(assignment, out_dir / "assignment.json",
                        out_dir / "centroids.gradf", config_echo=echo)
        result = clustered_select(X, assignment, budget, lam=args.lam, tol=args.tol)
        wall = time.perf_counter() - t0

        timing = {"wall_time_s": wall} if args.record_timing else None
        save_selection(result, out_dir / "selection.json", method="clustered_omp",
                       config_echo={**echo, **(timing or {})})
        report = diagnostics.build_submodularity_report(
            X, budget, args.lam, args.tol, achieved_size=int(result.indices.size))
        diagnostics.save_report({"schema": "submodularity-report-v1",
                                 **report.to_dict(), "config": echo},
                                out_dir / "submodularity.json")
        with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
            json.dump(run_cfg, fh, sort_keys=True, indent=1)
            fh.write("\n")
    print(f"selected {result.indices.size} of {matrix.n_samples} "
          f"(global_error={result.global_error:.6g}, {wall:.2f}s)")
    return 0


def cmd_baseline(args) -> int:
    _apply_flag_defaults(args)
    matrix, manifest = _load_features(args.features)
    X = as_float64_rows(matrix)
    if args.normalize:
        X = normalize_rows(X)
    budget = _resolve_budget(matrix.n_samples, args)
    out_dir = Path(args.out_dir)
    with _output_lock(out_dir):
        echo = {**_run_config(args, budget, extra={"method": args.method}),
                "n_samples": matrix.n_samples}
        t0 = time.perf_counter()
        extra_echo = {}
        if args.method == "uniform":
            idx = baselines.uniform_select(matrix.n_samples, budget, args.seed)
            result = _weightless(idx, X)
        elif args.method in ("hardest", "lowest_score"):
            direction = "highest" if args.method == "hardest" else "lowest"
            idx = baselines.score_rank_select(manifest, budget, direction)
            result = _weightless(idx, X)
        elif args.method == "kcenter_greedy":
            idx = baselines.kcenter_greedy(X, budget, args.seed)
            result = _weightless(idx, X)
            extra_echo["covering_radius"] = baselines.covering_radius(X, idx)
        elif args.method == "global_omp":
            result = baselines.global_omp_select(X, budget, lam=args.lam, tol=args.tol)
        else:
            raise CliError(f"unknown method {args.method!r}")
        wall = time.perf_counter() - t0
        timing = {"wall_time_s": wall} if args.record_timing else {}
        save_selection(result, out_dir / "selection.json", method=args.method,
                       config_echo={**echo, **extra_echo, **timing})
    print(f"{args.method}: selected {len(result.indices)} of {matrix.n_samples} "
          f"(global_error={result.global_error:.6g})")
    return 0


def _weightless(indices: np.ndarray, X: np.ndarray) -> SelectionResult:
    weights = np.ones(indices.size)
    return SelectionResult(
        indices=np.asarray(indices, dtype=np.int64),
        weights=weights,
        per_cluster=[],
        global_error=matching_error(weights, X[indices], column_mean(X)),
        config={},
    )


def cmd_oracle(args) -> int:
    matrix, _ = _load_features(args.features)
    X = as_float64_rows(matrix)
    target = column_mean(X)
    idx, w, err = diagnostics.brute_force_optimal(X, target, args.budget, args.lam)
    out = {
        "schema": "oracle-result-v1",
        "indices": idx.tolist(),
        "weights": w.tolist(),
        "error": err,
        "config": {"features": [str(p) for p in args.features],
                   "budget": args.budget, "lam": args.lam},
    }
    text = json.dumps(out, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.selections:
        obj = load_selection(path)
        cfg = obj.get("config", {})
        feats = cfg.get("features", [])
        per_source: dict = {}
        if feats:
            try:
                _, manifest = _load_features(feats)
                sources = manifest.source_datasets
                for i in obj["indices"]:
                    per_source[sources[i]] = per_source.get(sources[i], 0) + 1
            except (OSError, ValueError):
                per_source = {}
        rows.append({
            "file": str(path),
            "method": obj.get("method", "?"),
            "selected": len(obj["indices"]),
            "global_error": obj["global_error"],
            "wall_time_s": cfg.get("wall_time_s"),
            "per_source": dict(sorted(per_source.items())),
        })

    headers = ["file", "method", "selected", "global_error", "wall_time_s", "sources_covered"]
    table = [
        [r["file"], r["method"], str(r["selected"]), f"{r['global_error']:.6g}",
         "-" if r["wall_time_s"] is None else f"{r['wall_time_s']:.2f}",
         str(len(r["per_source"]))]
        for r in rows
    ]
    widths = [max(len(h), *(len(t[i]) for t in table)) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    print(line)
    print("-" * len(line))
    for t in table:
        print("  ".join(c.ljust(w) for c, w in zip(t, widths)))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"schema": "selection-report-v1", "rows": rows}, fh,
                      sort_keys=True, indent=1)
            fh.write("\n")
    return 0


def _add_common(p, features_required=True):
    p.add_argument("--features", nargs="+", required=features_required,
                   help="feature file(s)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lam", type=float, default=None,
                   help=f"ridge regularization weight (default {DEFAULT_LAM})")
    p.add_argument("--tol", type=float, default=None,
                   help=f"pursuit stopping tolerance (default {DEFAULT_TOL})")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None,
                   help="unit-l2 normalize rows before clustering/selection")
    p.add_argument("--budget", type=int, default=None, help="absolute subset size")
    p.add_argument("--fraction", type=float, default=None,
                   help=f"subset size as a fraction (default {DEFAULT_FRACTION})")
    p.add_argument("--record-timing", action="store_true",
                   help="embed wall time in the output (off by default so reruns "
                        "are byte-identical)")


def _apply_flag_defaults(args) -> None:
    for name, fallback in (("seed", 0), ("lam", DEFAULT_LAM), ("tol", DEFAULT_TOL),
                           ("normalize", False)):
        if getattr(args, name, None) is None:
            setattr(args, name, fallback)
    if args.budget is None and args.fraction is None:
        args.fraction = DEFAULT_FRACTION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradcoreset",
        description="Coreset selection by clustered gradient matching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic blob features")
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--samples-per-cluster", type=int, default=100)
    p.add_argument("--sizes", type=str, default=None,
                   help="comma-separated per-cluster sizes (overrides --samples-per-cluster)")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--center-scale", type=float, default=10.0)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("project", help="project raw gradients to feature dimension")
    p.add_argument("--raw", nargs="+", required=True,
                   help="raw gradient file(s); several files are treated as "
                        "checkpoints of the same samples and averaged")
    p.add_argument("--dim", type=int, default=DEFAULT_PROJECTION_DIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-rows", type=int, default=64)
    p.add_argument("--sign-pattern", choices=("rademacher", "identity"),
                   default="rademacher",
                   help="'identity' is a validation hook (requires dim == source dim)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("cluster", help="k-means over a feature file")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("select", help="cluster, allocate, and pursue the coreset")
    _add_common(p, features_required=False)
    p.add_argument("--config", default=None,
                   help="JSON run config; explicit flags override its values")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--assignment", default=None,
                   help="reuse a precomputed assignment.json (skips clustering)")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("baseline", help="run a reference selector")
    _add_common(p)
    p.add_argument("--method", choices=baselines.METHODS, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("oracle", help="exhaustive best subset on a small input")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--lam", type=float, default=DEFAULT_LAM)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="tabulate one or more selection results")
    p.add_argument("selections", nargs="+")
    p.add_argument("--out", default=None, help="also write machine-readable JSON")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
