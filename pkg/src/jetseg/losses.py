"""Composite segmentation loss (recall + precision + boundary-IoU scores
with adaptive class weights) and the confusion/mIoU metric machinery.

Written as scores R, P, B, each maximal at a weighted ceiling of
S = sum(w); the minimized loss is 3*S - (R + P + B), which is zero exactly
at perfect prediction and nonnegative everywhere.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import torch
import torch.nn.functional as F

from .errors import InvalidInputError, InvalidSpecError, UndefinedMetricError

IGNORE_INDEX = 255


@dataclass
class ConfusionStats:
    """Per-class true-positive / false-positive / false-negative counts.

    Counts are float tensors; they are integers when produced from hard
    labels and fractional when produced from soft probabilities.
    """

    tp: torch.Tensor
    fp: torch.Tensor
    fn: torch.Tensor
    num_classes: int

    def merge(self, other: "ConfusionStats") -> "ConfusionStats":
        if other.num_classes != self.num_classes:
            raise InvalidInputError("cannot merge stats with different class counts")
        return ConfusionStats(self.tp + other.tp, self.fp + other.fp,
                              self.fn + other.fn, self.num_classes)


@dataclass
class BoundaryStats:
    """Counts restricted to the union of predicted and target boundaries."""

    tp_b: float
    fp_b: float
    fn_b: float
    width: int = 1


@dataclass
class ClassWeights:
    w: torch.Tensor
    beta: float


def _check_probs(probs: torch.Tensor, target: torch.Tensor):
    if probs.dim() != 4:
        raise InvalidInputError(f"probs must be (N, C, H, W), got {probs.dim()}-D")
    if target.dim() != 3:
        raise InvalidInputError(f"target must be (N, H, W), got {target.dim()}-D")
    if probs.shape[0] != target.shape[0] or probs.shape[2:] != target.shape[1:]:
        raise InvalidInputError(
            f"probs {tuple(probs.shape)} and target {tuple(target.shape)} do not align"
        )
    sums = probs.sum(dim=1)
    if not torch.allclose(sums, torch.ones_like(sums), atol=1e-5):
        raise InvalidInputError("probs must sum to 1 over the class dim (softmax outputs)")
    c = probs.shape[1]
    bad = (target < 0) | ((target >= c) & (target != IGNORE_INDEX))
    if bad.any():
        raise InvalidInputError(
            f"target labels must lie in [0, {c}) or equal the ignore index {IGNORE_INDEX}"
        )


def soft_confusion(probs: torch.Tensor, target: torch.Tensor,
                   ignore_index: int = IGNORE_INDEX) -> ConfusionStats:
    """Differentiable confusion counts from softmax probabilities.

    tp_c sums the class-c probability over pixels whose true class is c,
    fp_c over pixels of any other (non-ignored) class, and fn_c sums the
    missing probability 1 - p_c over pixels of class c.
    """
    _check_probs(probs, target)
    c = probs.shape[1]
    valid = (target != ignore_index)
    onehot = F.one_hot(target.masked_fill(~valid, 0).long(), c).permute(0, 3, 1, 2)
    onehot = onehot.to(probs.dtype) * valid.unsqueeze(1).to(probs.dtype)
    flat_p = probs.flatten(2)
    flat_t = onehot.flatten(2)
    valid_any = valid.unsqueeze(1).to(probs.dtype).flatten(2)
    tp = (flat_p * flat_t).sum(dim=(0, 2))
    fn = (flat_t * (1.0 - flat_p)).sum(dim=(0, 2))
    fp = (flat_p * (valid_any - flat_t)).sum(dim=(0, 2))
    return ConfusionStats(tp, fp, fn, c)


def hard_confusion(pred: torch.Tensor, target: torch.Tensor, num_classes: int,
                   ignore_index: int = IGNORE_INDEX) -> ConfusionStats:
    """Integer confusion counts from predicted and true label maps."""
    if pred.shape != target.shape:
        raise InvalidInputError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    valid = target != ignore_index
    p = pred[valid].long()
    t = target[valid].long()
    if ((p < 0) | (p >= num_classes)).any():
        raise InvalidInputError(f"pred labels must lie in [0, {num_classes})")
    matrix = torch.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    matrix = matrix.reshape(num_classes, num_classes).to(torch.float64)
    tp = matrix.diagonal()
    fp = matrix.sum(dim=0) - tp
    fn = matrix.sum(dim=1) - tp
    return ConfusionStats(tp.clone(), fp, fn, num_classes)


def class_weights(pixel_counts: Union[Sequence[int], torch.Tensor], beta: float,
                  eps: float = 1e-6) -> ClassWeights:
    """Effective-number weights w_c proportional to (1-beta)/(1-beta^n_c),
    guarded for empty classes and normalized to sum to the class count.
    """
    if not 0.0 <= beta < 1.0:
        raise InvalidSpecError(f"beta must lie in [0, 1), got {beta}")
    counts = torch.as_tensor(pixel_counts, dtype=torch.float64)
    if (counts < 0).any():
        raise InvalidInputError("pixel counts must be nonnegative")
    effective = (1.0 - torch.pow(torch.tensor(beta, dtype=torch.float64), counts)).clamp(min=eps)
    raw = (1.0 - beta) / effective
    w = raw * counts.numel() / raw.sum()
    return ClassWeights(w, beta)


def _boundary_mask(labels: torch.Tensor, width: int) -> torch.Tensor:
    """Pixels whose (2*width+1)^2 in-bounds neighborhood holds >1 label."""
    x = labels.to(torch.float32).unsqueeze(1)
    k = 2 * width + 1
    local_max = F.max_pool2d(x, k, stride=1, padding=width)
    local_min = -F.max_pool2d(-x, k, stride=1, padding=width)
    return (local_max != local_min).squeeze(1)


def boundary_stats(pred: torch.Tensor, target: torch.Tensor, width: int = 1,
                   ignore_index: int = IGNORE_INDEX) -> BoundaryStats:
    """Hard boundary counts over the union of the two boundary masks.

    A boundary pixel of a label map is one whose neighborhood contains a
    differing label (the ignore index acts as a label of its own, but
    ignored pixels never enter the tallies). Rules:
      tp_b: pixel on both boundaries with matching labels
      fp_b: pixel on the predicted boundary not matched that way
      fn_b: pixel on the target boundary not matched that way
    """
    if width < 1:
        raise InvalidSpecError(f"boundary width must be >= 1, got {width}")
    if pred.shape != target.shape:
        raise InvalidInputError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    if pred.dim() == 2:
        pred, target = pred.unsqueeze(0), target.unsqueeze(0)
    valid = target != ignore_index
    bp = _boundary_mask(pred, width) & valid
    bt = _boundary_mask(target, width) & valid
    agree = (pred == target) & bp & bt
    tp = agree.sum()
    fp = (bp & ~agree).sum()
    fn = (bt & ~agree).sum()
    return BoundaryStats(float(tp), float(fp), float(fn), width)


def _soft_boundary_iou(probs, target, width, eps, ignore_index):
    """Differentiable boundary IoU: soft agreement tallied over the union
    of the target boundary and the (detached) argmax-prediction boundary.
    """
    with torch.no_grad():
        pred = probs.argmax(dim=1)
        valid = target != ignore_index
        region = (_boundary_mask(pred, width) | _boundary_mask(target, width)) & valid
    safe_target = target.masked_fill(~valid, 0).long()
    p_true = probs.gather(1, safe_target.unsqueeze(1)).squeeze(1)
    sel = region.to(probs.dtype)
    tp = (p_true * sel).sum()
    miss = ((1.0 - p_true) * sel).sum()
    return (tp + eps) / (tp + 2.0 * miss + eps)


def jetloss_components(probs: torch.Tensor, target: torch.Tensor,
                       weights: Optional[Union[ClassWeights, torch.Tensor]] = None,
                       eps: float = 1e-6, boundary_width: int = 1,
                       ignore_index: int = IGNORE_INDEX) -> dict:
    """Recall, precision and boundary scores plus the minimized total.

    R = sum_c w_c (tp_c+eps)/(tp_c+fn_c+eps), P likewise with fp, and
    B = sum(w) * boundary IoU. Total = 3*sum(w) - (R + P + B).
    """
    stats = soft_confusion(probs, target, ignore_index)
    c = stats.num_classes
    if weights is None:
        w = torch.ones(c, dtype=probs.dtype, device=probs.device)
    else:
        w = weights.w if isinstance(weights, ClassWeights) else torch.as_tensor(weights)
        w = w.to(dtype=probs.dtype, device=probs.device)
        if w.numel() != c:
            raise InvalidInputError(f"need {c} class weights, got {w.numel()}")
    recall = (w * (stats.tp + eps) / (stats.tp + stats.fn + eps)).sum()
    precision = (w * (stats.tp + eps) / (stats.tp + stats.fp + eps)).sum()
    iou_b = _soft_boundary_iou(probs, target, boundary_width, eps, ignore_index)
    boundary = w.sum() * iou_b
    total = 3.0 * w.sum() - (recall + precision + boundary)
    return {
        "total": total,
        "recall": recall,
        "precision": precision,
        "boundary": boundary,
        "boundary_iou": iou_b,
        "weight_sum": w.sum(),
    }


def jetloss(probs: torch.Tensor, target: torch.Tensor,
            weights: Optional[Union[ClassWeights, torch.Tensor]] = None,
            eps: float = 1e-6, boundary_width: int = 1,
            ignore_index: int = IGNORE_INDEX) -> torch.Tensor:
    """Scalar composite loss; zero at perfect one-hot agreement (up to eps)."""
    return jetloss_components(probs, target, weights, eps, boundary_width, ignore_index)["total"]


class JetLoss(torch.nn.Module):
    """Criterion wrapper taking logits; softmax is applied internally."""

    def __init__(self, weights=None, eps: float = 1e-6, boundary_width: int = 1,
                 ignore_index: int = IGNORE_INDEX):
        super().__init__()
        self.eps = eps
        self.boundary_width = boundary_width
        self.ignore_index = ignore_index
        w = weights.w if isinstance(weights, ClassWeights) else weights
        if w is not None:
            self.register_buffer("weights", torch.as_tensor(w, dtype=torch.float32))
        else:
            self.weights = None

    def forward(self, logits, target):
        probs = torch.softmax(logits, dim=1)
        return jetloss(probs, target, self.weights, self.eps,
                       self.boundary_width, self.ignore_index)


def per_class_iou(stats: ConfusionStats) -> torch.Tensor:
    """IoU per class; NaN marks classes absent from prediction and target."""
    denom = stats.tp + stats.fp + stats.fn
    iou = stats.tp / denom
    iou[denom == 0] = float("nan")
    return iou


def miou(stats: ConfusionStats, include_absent: bool = False) -> float:
    """Mean IoU over classes.

    By default classes absent from both prediction and target are excluded
    from the mean; with include_absent=True the sum is divided by the full
    class count instead (absent classes contribute zero).
    """
    denom = stats.tp + stats.fp + stats.fn
    present = denom > 0
    if not bool(present.any()):
        raise UndefinedMetricError("no class is present in prediction or target")
    iou = stats.tp[present] / denom[present]
    if include_absent:
        return float(iou.sum() / stats.num_classes)
    return float(iou.mean())
