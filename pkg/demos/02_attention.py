#!/usr/bin/env python3
"""The three attention gates and how they modulate features.

All three multiply the input by a sigmoid gate in (0, 1): CBAM gates
channels then space, SAM gates space only, and ECAM derives a channel gate
from a 1-D convolution over the pooled descriptor.
"""

import torch

from jetseg import build_attention
from jetseg.ops import eca_kernel_size

torch.manual_seed(1)
x = torch.randn(2, 32, 16, 16)

for kind in ("cbam", "sam", "ecam"):
    gate = build_attention(kind, 32)
    y = gate(x)
    ratio = (y / x).abs()
    params = sum(p.numel() for p in gate.parameters())
    print(f"{kind:5s}: out {tuple(y.shape)}, params {params:4d}, "
          f"gate range [{ratio.min():.3f}, {ratio.max():.3f}]")

# ECAM adapts its 1-D kernel to the channel count:
for c in (8, 16, 32, 64, 128):
    print(f"eca kernel for C={c:3d}: {eca_kernel_size(c)}")

# The gate never flips the sign of a feature and never amplifies it.
gate = build_attention("cbam", 32)
y = gate(x)
print("within [-|x|, |x|]:", bool((y.abs() <= x.abs() + 1e-7).all()))
print("sign preserved:    ", bool((y * x >= -1e-7).all()))
