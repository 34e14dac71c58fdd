#!/usr/bin/env python3
"""End to end on synthetic data: train a small model, evaluate the best
checkpoint, and time inference.

The synthetic dataset paints colored shapes whose color encodes the class,
so a few epochs suffice to watch the whole pipeline work.
"""

import dataclasses
import tempfile
from pathlib import Path

from jetseg import profile_config, split_dataset, synthetic_blobs
from jetseg.engine import benchmark, evaluate, format_metrics_table, train

out = Path(tempfile.mkdtemp(prefix="jetseg_demo_"))
dataset = synthetic_blobs(64, 3, size=(64, 64), seed=0)
splits = split_dataset(dataset, seed=0)
print(f"dataset: {len(dataset)} samples -> train {len(splits.train)} / "
      f"val {len(splits.val)} / test {len(splits.test)}")

config = dataclasses.replace(profile_config("nano"), input_size=(64, 64))
record = train(config, splits, epochs=5, seed=0, lr=5e-3, batch_size=4, out_dir=out)
for e in record.epochs:
    print(f"  epoch {e.epoch}: train {e.train_loss:.3f}  val {e.val_loss:.3f}  "
          f"val mIoU {e.val_miou:.3f}")

print(f"\nbest epoch {record.best_epoch} (val mIoU {record.best_val_miou:.3f}); "
      f"records in {out}")

metrics = evaluate(out / "best.pt", splits.test)
print("\ntest metrics:")
print(format_metrics_table(metrics))

result = benchmark(config, input_size=(64, 64), warmup=5, iters=100)
print(f"\nlatency @ 64x64 (batch 1, cpu): median {result.median_ms:.2f} ms, "
      f"mean {result.mean_ms:.2f} ms, p95 {result.p95_ms:.2f} ms, "
      f"{result.fps:.1f} FPS")
