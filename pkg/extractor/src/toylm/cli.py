"""Command line: train the toy model and export per-sample gradient files."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .data import build_dataset
from .extract import extract_raw_gradients
from .model import ModelConfig
from .train import warmup_train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toylm",
        description="Toy LM warmup training and per-sample gradient export")
    parser.add_argument("--samples", type=int, default=240)
    parser.add_argument("--epochs", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--export-epochs", type=int, nargs="*", default=None,
                        help="which checkpoint epochs to export (default: all)")
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args(argv)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(args.samples, seed=args.seed)
    base, checkpoints = warmup_train(dataset, epochs=args.epochs, seed=args.seed)

    wanted = set(args.export_epochs) if args.export_epochs else {c.epoch for c in checkpoints}
    written = []
    for ckpt in checkpoints:
        if ckpt.epoch not in wanted:
            continue
        path = out / f"raw_epoch{ckpt.epoch}.gradf"
        extract_raw_gradients(base, ckpt, dataset, path)
        written.append(str(path))
        print(f"epoch {ckpt.epoch}: mean loss {ckpt.mean_loss:.4f} -> {path}")

    cfg = ModelConfig()
    echo = {
        "samples": args.samples, "epochs": args.epochs, "seed": args.seed,
        "adapter_dim": cfg.adapter_dim, "base_dim": cfg.base_dim,
        "files": written,
    }
    (out / "extract_config.json").write_text(
        json.dumps(echo, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
