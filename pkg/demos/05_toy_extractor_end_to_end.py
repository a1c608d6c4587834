"""End to end with real gradients: train the toy LM, export per-sample
optimizer directions, project, cluster, select.

Requires the companion ``toylm`` package (in ./extractor).
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from toylm import build_dataset, extract_raw_gradients, warmup_train

from gradcoreset import read_features
from gradcoreset.select import load_selection

workdir = Path(tempfile.mkdtemp(prefix="gradcoreset-e2e-"))
print(f"working in {workdir}")

dataset = build_dataset(90, seed=0)
base, checkpoints = warmup_train(dataset, epochs=3, seed=0)
print("warmup mean loss per epoch:",
      [f"{c.mean_loss:.3f}" for c in checkpoints])

raw_paths = []
for ckpt in checkpoints:
    path = workdir / f"raw_epoch{ckpt.epoch}.gradf"
    extract_raw_gradients(base, ckpt, dataset, path)
    raw_paths.append(str(path))
raw, manifest = read_features(raw_paths[0])
print(f"raw gradients: {raw.n_samples} x {raw.dim} per checkpoint, "
      f"tasks {sorted(set(manifest.source_datasets))}")

run = lambda *args: subprocess.run(
    [sys.executable, "-m", "gradcoreset.cli", *args],
    check=True, capture_output=True, text=True).stdout.strip()

features = workdir / "features.gradf"
print(run("project", "--raw", *raw_paths, "--dim", "256", "--seed", "5",
          "--out", str(features)))
print(run("select", "--features", str(features), "--k", "3", "--budget", "9",
          "--tol", "0.0", "--out-dir", str(workdir / "run")))

selection = load_selection(workdir / "run" / "selection.json")
picked_tasks = [manifest.source_datasets[i] for i in selection["indices"]]
counts = {t: picked_tasks.count(t) for t in sorted(set(picked_tasks))}
print(f"selected 9 of 90 with per-task counts {counts}")
print(run("report", str(workdir / "run" / "selection.json")))
