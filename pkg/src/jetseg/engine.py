"""Training, evaluation, latency benchmarking, and run records."""

import dataclasses
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import torch
from torch.utils.data import Dataset

from .complexity import ComplexityReport, model_complexity
from .config import ModelConfig
from .data import DatasetSplits, pixel_counts
from .errors import ConfigError, InvalidInputError, TrainingDivergedError
from .losses import (
    JetLoss,
    class_weights,
    hard_confusion,
    jetloss_components,
    miou,
    per_class_iou,
)
from .model import JetSeg

DEFAULT_LR = 1e-3
DEFAULT_BATCH_SIZE = 8


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_miou: float
    seconds: float


@dataclass
class RunRecord:
    config: dict
    seed: int
    optimizer: str
    learning_rate: float
    batch_size: int
    epochs: List[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_miou: float = 0.0
    final_test: Optional[dict] = None
    complexity: Optional[dict] = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "run.jsonl", "w") as fh:
            for stats in self.epochs:
                fh.write(json.dumps({"kind": "epoch", **dataclasses.asdict(stats)},
                                    sort_keys=True) + "\n")
            final = self.to_dict()
            final.pop("epochs")
            fh.write(json.dumps({"kind": "final", **final}, sort_keys=True) + "\n")
        lines = [f"profile={self.config.get('profile')} seed={self.seed} "
                 f"optimizer={self.optimizer} lr={self.learning_rate} batch={self.batch_size}"]
        for s in self.epochs:
            lines.append(f"epoch {s.epoch:3d}  train {s.train_loss:.4f}  "
                         f"val {s.val_loss:.4f}  val mIoU {s.val_miou:.4f}  {s.seconds:.1f}s")
        lines.append(f"best epoch {self.best_epoch} (val mIoU {self.best_val_miou:.4f})")
        if self.final_test:
            lines.append(f"test mIoU {self.final_test.get('miou'):.4f} "
                         f"(include-absent {self.final_test.get('miou_include_absent'):.4f})")
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


@dataclass
class BenchResult:
    profile: str
    input_size: tuple
    warmup_iters: int
    measured_iters: int
    latencies_ms: List[float]
    batch_size: int = 1

    @property
    def median_ms(self) -> float:
        return statistics.median(self.latencies_ms)

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.latencies_ms)

    @property
    def p95_ms(self) -> float:
        ordered = sorted(self.latencies_ms)
        return ordered[min(int(0.95 * len(ordered)), len(ordered) - 1)]

    @property
    def fps(self) -> float:
        return 1000.0 / self.median_ms

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "input_size": list(self.input_size),
            "warmup_iters": self.warmup_iters,
            "measured_iters": self.measured_iters,
            "batch_size": self.batch_size,
            "median_ms": self.median_ms,
            "mean_ms": self.mean_ms,
            "p95_ms": self.p95_ms,
            "fps": self.fps,
            "latencies_ms": self.latencies_ms,
        }


def _batches(dataset: Dataset, batch_size: int, order=None):
    indices = range(len(dataset)) if order is None else order.tolist()
    batch = []
    for i in indices:
        batch.append(dataset[i])
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


def _stack(batch):
    xs = torch.stack([b[0] for b in batch])
    ys = torch.stack([b[1] for b in batch])
    return xs, ys


def evaluate_model(model: JetSeg, dataset: Dataset, criterion: JetLoss,
                   num_classes: int, batch_size: int = DEFAULT_BATCH_SIZE) -> dict:
    """Accumulated hard confusion plus the mean loss and its components."""
    model.eval()
    stats = None
    loss_total, comp_totals, n_batches = 0.0, {}, 0
    with torch.no_grad():
        for batch in _batches(dataset, batch_size):
            x, y = _stack(batch)
            logits = model(x)
            probs = torch.softmax(logits, dim=1)
            comps = jetloss_components(probs, y, criterion.weights, criterion.eps,
                                       criterion.boundary_width, criterion.ignore_index)
            loss_total += float(comps["total"])
            for key in ("recall", "precision", "boundary"):
                comp_totals[key] = comp_totals.get(key, 0.0) + float(comps[key])
            batch_stats = hard_confusion(probs.argmax(dim=1), y, num_classes)
            stats = batch_stats if stats is None else stats.merge(batch_stats)
            n_batches += 1
    if stats is None:
        raise InvalidInputError("cannot evaluate on an empty dataset")
    iou = per_class_iou(stats)
    return {
        "miou": miou(stats),
        "miou_include_absent": miou(stats, include_absent=True),
        "per_class_iou": [None if torch.isnan(v) else float(v) for v in iou],
        "loss": loss_total / n_batches,
        "loss_components": {k: v / n_batches for k, v in comp_totals.items()},
        "num_pixels": float((stats.tp + stats.fn).sum()),
    }


def format_metrics_table(metrics: dict, class_names=None) -> str:
    """Render an evaluate_model() record as a per-class table."""
    lines = [f"{'class':<24} {'IoU':>8}"]
    lines.append("-" * 33)
    for idx, iou in enumerate(metrics["per_class_iou"]):
        name = class_names[idx] if class_names else f"class_{idx}"
        lines.append(f"{name:<24} {'absent' if iou is None else f'{iou:8.4f}':>8}")
    lines.append("-" * 33)
    lines.append(f"{'mIoU (present classes)':<24} {metrics['miou']:>8.4f}")
    lines.append(f"{'mIoU (all classes)':<24} {metrics['miou_include_absent']:>8.4f}")
    lines.append(f"{'loss':<24} {metrics['loss']:>8.4f}")
    for key, value in metrics["loss_components"].items():
        lines.append(f"{'  ' + key:<24} {value:>8.4f}")
    return "\n".join(lines)


def _save_checkpoint(path, model, optimizer, config, epoch, val_miou, seed, epochs):
    torch.save({
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict(),
        "config": config.to_dict(),
        "epoch": epoch,
        "val_miou": val_miou,
        "seed": seed,
        "epochs": [dataclasses.asdict(s) for s in epochs],
    }, path)


def load_checkpoint(path, config: Optional[ModelConfig] = None):
    """Rebuild the model stored in a checkpoint; an explicitly supplied
    config must match the snapshot field for field.
    """
    payload = torch.load(path, map_location="cpu", weights_only=False)
    stored = ModelConfig.from_dict(payload["config"])
    if config is not None:
        differing = [f.name for f in dataclasses.fields(ModelConfig)
                     if getattr(config, f.name) != getattr(stored, f.name)]
        if differing:
            raise ConfigError(
                f"checkpoint config differs from the supplied config in fields: {differing}"
            )
    model = JetSeg(stored)
    model.load_state_dict(payload["model"])
    return model, stored, payload


def train(config: ModelConfig, splits: DatasetSplits, epochs: int, seed: int,
          out_dir=None, lr: float = DEFAULT_LR, batch_size: int = DEFAULT_BATCH_SIZE,
          beta: float = 0.999, resume=None, loss_fn: str = "jetloss") -> RunRecord:
    """Train JetSeg on the given splits.

    Deterministic for a fixed seed: weight init comes from the global torch
    seed and batch order from a per-epoch generator derived from (seed,
    epoch), so a resumed run sees the same batches as an uninterrupted one.
    Checkpoints best-val-mIoU and last; a non-finite loss aborts with the
    offending batch index and a state dump.
    """
    if epochs < 0:
        raise InvalidInputError(f"epochs must be >= 0, got {epochs}")
    if epochs > 0 and (len(splits.train) == 0 or len(splits.val) == 0):
        raise InvalidInputError(
            f"train/val splits must be non-empty to train, got "
            f"{len(splits.train)}/{len(splits.val)} samples"
        )
    if config.num_classes != splits.num_classes:
        config = dataclasses.replace(config, num_classes=splits.num_classes)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    counts = pixel_counts(splits.train, splits.num_classes)
    weights = class_weights(counts, beta)
    if loss_fn == "jetloss":
        criterion = JetLoss(weights)
    elif loss_fn == "cross_entropy":
        criterion = torch.nn.CrossEntropyLoss(weight=weights.w.to(torch.float32),
                                              ignore_index=255)
    else:
        raise InvalidInputError(f"loss_fn must be 'jetloss' or 'cross_entropy', got {loss_fn!r}")
    eval_criterion = criterion if isinstance(criterion, JetLoss) else JetLoss(weights)

    torch.manual_seed(seed)
    model = JetSeg(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)

    record = RunRecord(config=config.to_dict(), seed=seed, optimizer="adam",
                       learning_rate=lr, batch_size=batch_size)
    start_epoch = 1
    if resume is not None:
        _, stored, payload = load_checkpoint(resume, config)
        model.load_state_dict(payload["model"])
        optimizer.load_state_dict(payload["optimizer"])
        record.epochs = [EpochStats(**s) for s in payload["epochs"]]
        start_epoch = payload["epoch"] + 1
        record.best_epoch = max(record.epochs, key=lambda s: s.val_miou).epoch if record.epochs else 0
        record.best_val_miou = max((s.val_miou for s in record.epochs), default=0.0)

    for epoch in range(start_epoch, epochs + 1):
        t0 = time.perf_counter()
        generator = torch.Generator().manual_seed(seed * 100003 + epoch)
        order = torch.randperm(len(splits.train), generator=generator)
        model.train()
        losses = []
        for batch_index, batch in enumerate(_batches(splits.train, batch_size, order)):
            x, y = _stack(batch)
            optimizer.zero_grad()
            logits = model(x)
            loss = criterion(logits, y) if torch.isfinite(logits).all() else None
            if loss is None or not torch.isfinite(loss):
                dump_path = None
                if out_dir is not None:
                    dump_path = out_dir / "diverged_state.pt"
                    torch.save({"model": model.state_dict(), "epoch": epoch,
                                "batch_index": batch_index}, dump_path)
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}",
                    epoch=epoch, batch_index=batch_index, dump_path=dump_path,
                )
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        val = evaluate_model(model, splits.val, eval_criterion, splits.num_classes, batch_size)
        stats = EpochStats(
            epoch=epoch,
            train_loss=sum(losses) / max(len(losses), 1),
            val_loss=val["loss"],
            val_miou=val["miou"],
            seconds=time.perf_counter() - t0,
        )
        record.epochs.append(stats)
        if stats.val_miou >= record.best_val_miou or record.best_epoch == 0:
            record.best_epoch = epoch
            record.best_val_miou = stats.val_miou
            if out_dir is not None:
                _save_checkpoint(out_dir / "best.pt", model, optimizer, config,
                                 epoch, stats.val_miou, seed, record.epochs)
        if out_dir is not None:
            _save_checkpoint(out_dir / "last.pt", model, optimizer, config,
                             epoch, stats.val_miou, seed, record.epochs)

    if record.epochs and splits.test is not None and len(splits.test) > 0:
        record.final_test = evaluate_model(model, splits.test, eval_criterion,
                                           splits.num_classes, batch_size)
    record.complexity = model_complexity(model, config.input_size).to_dict()
    # per-layer rows are bulky; keep totals in the record
    record.complexity.pop("layers")
    if out_dir is not None:
        record.save(out_dir)
    return record


def evaluate(checkpoint, dataset: Dataset, config: Optional[ModelConfig] = None,
             batch_size: int = DEFAULT_BATCH_SIZE) -> dict:
    """Metrics of a stored checkpoint on a dataset split."""
    model, stored, _ = load_checkpoint(checkpoint, config)
    criterion = JetLoss()
    return evaluate_model(model, dataset, criterion, stored.num_classes, batch_size)


def benchmark(config: ModelConfig, input_size=None, warmup: int = 10,
              iters: int = 100, batch_size: int = 1,
              device: str = "cpu", model: Optional[JetSeg] = None) -> BenchResult:
    """Latency protocol: untimed warmup, then per-iteration timing with
    device synchronization around every timestamp.
    """
    if iters < 100:
        raise InvalidInputError(f"need at least 100 measured iterations, got {iters}")
    if input_size is None:
        input_size = config.input_size
    if model is None:
        model = JetSeg(config)
    model = model.to(device).eval()
    x = torch.randn(batch_size, 3, input_size[0], input_size[1], device=device)

    def sync():
        if device.startswith("cuda"):
            torch.cuda.synchronize()

    latencies = []
    with torch.no_grad():
        for _ in range(warmup):
            model(x)
        sync()
        for _ in range(iters):
            t0 = time.perf_counter()
            model(x)
            sync()
            latencies.append((time.perf_counter() - t0) * 1000.0)
    return BenchResult(profile=config.profile, input_size=tuple(input_size),
                       warmup_iters=warmup, measured_iters=iters,
                       latencies_ms=latencies, batch_size=batch_size)


def analyze(config: ModelConfig, input_size=None) -> ComplexityReport:
    """Complexity report for a freshly built model at the given input size."""
    if input_size is None:
        input_size = config.input_size
    return model_complexity(JetSeg(config), tuple(input_size))
