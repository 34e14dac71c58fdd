#!/usr/bin/env python3
"""The composite loss and its metrics: recall/precision/boundary scores,
effective-number class weighting, and mIoU under both conventions.
"""

import torch

from jetseg import (
    boundary_stats,
    class_weights,
    hard_confusion,
    jetloss_components,
    miou,
    per_class_iou,
)

# a toy scene: left half class 0, right half class 1
target = torch.zeros(1, 16, 16, dtype=torch.long)
target[:, :, 8:] = 1
onehot = torch.nn.functional.one_hot(target, 2).permute(0, 3, 1, 2).float()
uniform = torch.full_like(onehot, 0.5)

print("loss as predictions move from uniform to perfect:")
for t in (0.0, 0.25, 0.5, 0.75, 1.0):
    probs = (1 - t) * uniform + t * onehot
    comps = jetloss_components(probs, target)
    print(f"  t={t:.2f}: total {float(comps['total']):7.4f}  "
          f"R {float(comps['recall']):.3f}  P {float(comps['precision']):.3f}  "
          f"B {float(comps['boundary']):.3f}")

# class weighting by effective number of pixels: rare classes get more say
counts = [50_000, 5_000, 120]
w = class_weights(counts, beta=0.999)
print("\npixel counts:", counts)
print("weights:     ", [round(v, 3) for v in w.w.tolist()], "(sum =", round(float(w.w.sum()), 3), ")")

# boundary statistics: a prediction whose edge is off by one column
pred = torch.zeros(16, 16, dtype=torch.long)
pred[:, 9:] = 1
stats = boundary_stats(pred, target[0])
print(f"\nboundary stats for a one-column shift: tp={stats.tp_b:.0f} "
      f"fp={stats.fp_b:.0f} fn={stats.fn_b:.0f}")

# mIoU, excluding or including absent classes
confusion = hard_confusion(pred.unsqueeze(0), target, num_classes=4)
print("\nper-class IoU:", per_class_iou(confusion).tolist())
print("mIoU over present classes:", round(miou(confusion), 4))
print("mIoU over all 4 classes:  ", round(miou(confusion, include_absent=True), 4))
