#!/usr/bin/env python3
"""A tour of the elementary operators: CDDC branches, the JetConv residual
unit, channel shuffle, grouped pointwise convolutions, and the two
lightweight activations.
"""

import torch

from jetseg import (
    CDDConv,
    GPConv,
    JetConv,
    JetConvSpec,
    channel_shuffle,
    estimate_groups,
    reu,
    tanhexp,
)

torch.manual_seed(0)

# A CDDC branch pairs a dilated asymmetric factorization (k x 1 then 1 x k)
# with a plain k x k depthwise conv, so the receptive field grows without
# giving up symmetric, all-direction feature extraction.
x = torch.randn(1, 8, 32, 32)
branch = CDDConv(8, kernel=5, dilation=2)
print("CDDC(k=5, d=2):", tuple(x.shape), "->", tuple(branch(x).shape))

# JetConv runs several branches, fuses them cumulatively, concatenates the
# partial sums, projects back with a grouped 1x1 and closes the residual.
for levels in (1, 2, 3):
    spec = JetConvSpec(8, levels=levels)
    conv = JetConv(spec)
    y = conv(x)
    print(f"JetConv levels={levels}: kernels={spec.kernel_sizes} "
          f"dilations={spec.dilation_rates} concat_width={conv.project.in_channels} "
          f"out={tuple(y.shape)}")

# Channel shuffle interleaves the groups of a grouped conv so information
# crosses group boundaries. It is a pure permutation:
channels = torch.arange(8.0).reshape(1, 8, 1, 1)
print("shuffle order (C=8, g=2):", channel_shuffle(channels, 2).reshape(-1).tolist())
print("shuffle then inverse:    ",
      channel_shuffle(channel_shuffle(channels, 2), 4).reshape(-1).tolist())

# Group counts are picked automatically as the largest divisor under a cap.
for c_in, c_out in [(16, 32), (24, 36), (7, 13)]:
    print(f"estimate_groups({c_in}, {c_out}, g_max=8) = {estimate_groups(c_in, c_out, 8)}")

g = estimate_groups(16, 32, 8)
pw = GPConv(16, 32, groups=g)
print(f"GPConv 16->32 with g={g}: {sum(p.numel() for p in pw.parameters())} weights "
      f"(vs {16 * 32} ungrouped)")

# The two activations: REU is linear for x >= 0 and x*exp(x) below zero;
# TanhExp is x*tanh(exp(x)), nearly linear for positive x.
points = torch.tensor([-3.0, -1.0, 0.0, 1.0, 3.0])
print("x:      ", points.tolist())
print("reu:    ", [round(v, 4) for v in reu(points).tolist()])
print("tanhexp:", [round(v, 4) for v in tanhexp(points).tolist()])
