"""Lightweight three-branch decoder: per-branch 1x1 projections, upsample
and sum at stride 4, a 3x3 head, then per-pixel class logits at input
resolution.
"""

from dataclasses import dataclass
from typing import Sequence

import torch.nn as nn

from .errors import InvalidInputError, InvalidSpecError
from .ops import GPConv, build_activation, estimate_groups


@dataclass(frozen=True)
class DecoderSpec:
    in_channels: Sequence[int]  # stage widths at strides 4, 8, 16
    mid_channels: int = 32
    head_channels: int = 24
    num_classes: int = 32
    activation: str = "tanhexp"
    g_max: int = 8

    def __post_init__(self):
        object.__setattr__(self, "in_channels", tuple(self.in_channels))
        if len(self.in_channels) != 3:
            raise InvalidSpecError(f"expected 3 input widths, got {len(self.in_channels)}")
        if self.num_classes < 2:
            raise InvalidSpecError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.mid_channels < 1 or self.head_channels < 1:
            raise InvalidSpecError("mid_channels and head_channels must be positive")


class _Branch(nn.Module):
    def __init__(self, in_channels, mid_channels, activation, g_max):
        super().__init__()
        self.conv = GPConv(in_channels, mid_channels,
                           groups=estimate_groups(in_channels, mid_channels, g_max))
        self.bn = nn.BatchNorm2d(mid_channels)
        self.act = build_activation(activation)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class Decoder(nn.Module):
    def __init__(self, spec: DecoderSpec):
        super().__init__()
        self.spec = spec
        self.branches = nn.ModuleList(
            _Branch(c, spec.mid_channels, spec.activation, spec.g_max)
            for c in spec.in_channels
        )
        self.up8 = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.up16 = nn.Upsample(scale_factor=4, mode="bilinear", align_corners=False)
        self.head_conv = nn.Conv2d(spec.mid_channels, spec.head_channels, 3,
                                   padding=1, bias=False)
        self.head_bn = nn.BatchNorm2d(spec.head_channels)
        self.head_act = build_activation(spec.activation)
        self.classifier = nn.Conv2d(spec.head_channels, spec.num_classes, 1)
        self.up_out = nn.Upsample(scale_factor=4, mode="bilinear", align_corners=False)

    def forward(self, features):
        if len(features) != 3:
            raise InvalidInputError(f"expected 3 feature maps, got {len(features)}")
        f4, f8, f16 = features
        h, w = f4.shape[2], f4.shape[3]
        if f8.shape[2] * 2 != h or f8.shape[3] * 2 != w or f16.shape[2] * 4 != h or f16.shape[3] * 4 != w:
            raise InvalidInputError(
                "feature maps must sit at strides 4/8/16: got spatial dims "
                f"{tuple(f4.shape[2:])}, {tuple(f8.shape[2:])}, {tuple(f16.shape[2:])}"
            )
        y = self.branches[0](f4) + self.up8(self.branches[1](f8)) + self.up16(self.branches[2](f16))
        y = self.head_act(self.head_bn(self.head_conv(y)))
        return self.up_out(self.classifier(y))


def decode(features, spec: DecoderSpec):
    """One-shot functional form of the decoder (fresh parameters)."""
    return Decoder(spec)(features)
