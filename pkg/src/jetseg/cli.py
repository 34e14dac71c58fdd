"""Batch command line: train / eval / bench / analyze."""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import torch

from .config import ModelConfig, load_config, profile_config, save_config
from .data import (
    CamVidDataset,
    DatasetSplits,
    build_splits,
    compute_normalization,
    split_dataset,
    synthetic_blobs,
)
from .engine import analyze, benchmark, evaluate, format_metrics_table, train


def _add_common(parser):
    parser.add_argument("--profile", choices=("workstation", "agx", "nano"),
                        default="workstation", help="device profile")
    parser.add_argument("--config", type=Path, default=None,
                        help="config file overriding the profile defaults")
    parser.add_argument("--input-size", type=int, nargs=2, metavar=("H", "W"),
                        default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs/latest"))


def _resolve_config(args, num_classes=None, input_size=None) -> ModelConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = profile_config(args.profile)
    overrides = {}
    if input_size is not None:
        overrides["input_size"] = tuple(input_size)
    elif args.input_size is not None:
        overrides["input_size"] = tuple(args.input_size)
    if num_classes is not None:
        overrides["num_classes"] = num_classes
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _data_size(args):
    if args.input_size is not None:
        return tuple(args.input_size)
    return (512, 512) if getattr(args, "data", None) is not None else (64, 64)


def _load_splits(args) -> DatasetSplits:
    size = _data_size(args)
    if args.data is None:
        dataset = synthetic_blobs(args.synthetic_samples, args.synthetic_classes,
                                  size=size, seed=args.seed)
        return split_dataset(dataset, seed=args.seed)
    dataset = CamVidDataset(args.data, target_size=size,
                            eleven_classes=args.eleven_classes)
    manifest = build_splits(dataset.ids, seed=args.seed)
    def subset(ids, mean=None, std=None):
        return CamVidDataset(args.data, ids=ids, target_size=size, mean=mean, std=std,
                             eleven_classes=args.eleven_classes)
    # standardization constants come from the training split and ride along
    # in the manifest
    manifest.mean, manifest.std = compute_normalization(subset(manifest.train))
    def standardized(ids):
        return subset(ids, manifest.mean, manifest.std)
    return DatasetSplits(train=standardized(manifest.train), val=standardized(manifest.val),
                         test=standardized(manifest.test), num_classes=dataset.num_classes,
                         manifest=manifest)


def cmd_train(args):
    splits = _load_splits(args)
    config = _resolve_config(args, num_classes=splits.num_classes,
                             input_size=_data_size(args))
    record = train(config, splits, epochs=args.epochs, seed=args.seed,
                   out_dir=args.out, lr=args.lr, batch_size=args.batch_size,
                   loss_fn=args.loss)
    if splits.manifest is not None:
        splits.manifest.save(Path(args.out) / "splits")
    save_config(config, Path(args.out) / "config.yaml")
    print((Path(args.out) / "summary.txt").read_text())
    return 0


def cmd_eval(args):
    splits = _load_splits(args)
    dataset = {"train": splits.train, "val": splits.val, "test": splits.test}[args.split]
    metrics = evaluate(args.checkpoint, dataset, batch_size=args.batch_size)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
    print(f"split={args.split} mIoU={metrics['miou']:.4f} "
          f"(include-absent {metrics['miou_include_absent']:.4f}) loss={metrics['loss']:.4f}")
    print(format_metrics_table(metrics))
    return 0


def cmd_bench(args):
    config = _resolve_config(args)
    size = tuple(args.input_size) if args.input_size is not None else config.input_size
    result = benchmark(config, input_size=size, warmup=args.warmup, iters=args.iters,
                       batch_size=args.batch_size,
                       device="cuda" if torch.cuda.is_available() and not args.cpu else "cpu")
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "bench.json", "w") as fh:
        json.dump(result.to_dict(), fh, sort_keys=True, indent=2)
    print(f"profile={result.profile} input={size[0]}x{size[1]} "
          f"median={result.median_ms:.2f}ms mean={result.mean_ms:.2f}ms "
          f"p95={result.p95_ms:.2f}ms fps={result.fps:.1f}")
    return 0


def cmd_analyze(args):
    config = _resolve_config(args)
    size = tuple(args.input_size) if args.input_size is not None else config.input_size
    report = analyze(config, size)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "complexity.json", "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
    print(report.table(max_rows=args.rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetseg",
                                     description="real-time segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_common(p_train)
    p_train.add_argument("--data", type=Path, default=None,
                         help="dataset root (images/, labels/, palette.txt); "
                              "omitted = synthetic shapes")
    p_train.add_argument("--epochs", type=int, default=15)
    p_train.add_argument("--lr", type=float, default=1e-3)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--loss", choices=("jetloss", "cross_entropy"), default="jetloss")
    p_train.add_argument("--eleven-classes", action="store_true",
                         help="use the 11-class grouping instead of the full palette")
    p_train.add_argument("--synthetic-samples", type=int, default=128)
    p_train.add_argument("--synthetic-classes", type=int, default=3)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--data", type=Path, default=None)
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")
    p_eval.add_argument("--batch-size", type=int, default=8)
    p_eval.add_argument("--eleven-classes", action="store_true")
    p_eval.add_argument("--synthetic-samples", type=int, default=128)
    p_eval.add_argument("--synthetic-classes", type=int, default=3)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="measure inference latency")
    _add_common(p_bench)
    p_bench.add_argument("--warmup", type=int, default=10)
    p_bench.add_argument("--iters", type=int, default=100)
    p_bench.add_argument("--batch-size", type=int, default=1)
    p_bench.add_argument("--cpu", action="store_true", help="force CPU timing")
    p_bench.set_defaults(func=cmd_bench)

    p_analyze = sub.add_parser("analyze", help="FLOPs and parameter report")
    _add_common(p_analyze)
    p_analyze.add_argument("--rows", type=int, default=None,
                           help="limit table rows; full table by default")
    p_analyze.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
