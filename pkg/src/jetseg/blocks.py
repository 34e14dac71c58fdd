"""JetBlocks: the stem input block and the residual standard block."""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import torch.nn as nn

from .errors import InvalidInputError, InvalidSpecError
from .ops import (
    GPConv,
    JetConv,
    JetConvSpec,
    build_activation,
    build_attention,
    channel_shuffle,
    estimate_groups,
)


@dataclass(frozen=True)
class JetBlockSpec:
    """Block geometry. The input variant ignores expansion and attention."""

    variant: str  # "input" | "standard"
    in_channels: int
    out_channels: int
    stride: int = 1
    expansion_ratio: Union[float, Fraction] = 2
    levels: int = 1
    jetconv: Optional[JetConvSpec] = None
    attention: str = "cbam"
    activation: str = "reu"
    g_max: int = 8

    def __post_init__(self):
        if self.variant not in ("input", "standard"):
            raise InvalidSpecError(f"variant must be 'input' or 'standard', got {self.variant!r}")
        if self.stride not in (1, 2):
            raise InvalidSpecError(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidSpecError("channel counts must be positive")
        if self.variant == "standard":
            expanded = Fraction(self.expansion_ratio).limit_denominator(10**6) * self.in_channels
            if expanded <= 0 or expanded.denominator != 1:
                raise InvalidSpecError(
                    f"expansion_ratio={self.expansion_ratio} gives non-integer "
                    f"expanded width for {self.in_channels} input channels"
                )

    @property
    def expanded_channels(self) -> int:
        return int(Fraction(self.expansion_ratio).limit_denominator(10**6) * self.in_channels)


class JetInputBlock(nn.Module):
    """Stem: JetConv projecting to the stem width, then BN and activation."""

    def __init__(self, spec: JetBlockSpec):
        super().__init__()
        if spec.variant != "input":
            raise InvalidSpecError(f"expected an input-variant spec, got {spec.variant!r}")
        self.spec = spec
        conv_spec = spec.jetconv or JetConvSpec(spec.in_channels, levels=spec.levels)
        if conv_spec.in_channels != spec.in_channels:
            raise InvalidSpecError(
                f"jetconv expects {conv_spec.in_channels} channels, block receives {spec.in_channels}"
            )
        self.jetconv = JetConv(conv_spec, out_channels=spec.out_channels,
                               stride=spec.stride, g_max=spec.g_max)
        self.bn = nn.BatchNorm2d(spec.out_channels)
        self.act = build_activation(spec.activation)

    def forward(self, x):
        if x.shape[1] != self.spec.in_channels:
            raise InvalidInputError(f"expected {self.spec.in_channels} channels, got {x.shape[1]}")
        return self.act(self.bn(self.jetconv(x)))


class JetBlock(nn.Module):
    """Standard residual block.

    Pipeline: 1x1 GPConv expand, BN, activation, channel shuffle, JetConv
    (carrying the stride when 2), attention gate, activation, 1x1 GPConv
    reduce, BN, then the skip addition. The skip is the identity when shapes
    match and a grouped 1x1 projection plus BN otherwise.
    """

    def __init__(self, spec: JetBlockSpec):
        super().__init__()
        if spec.variant != "standard":
            raise InvalidSpecError(f"expected a standard-variant spec, got {spec.variant!r}")
        self.spec = spec
        mid = spec.expanded_channels
        self.expand = GPConv(spec.in_channels, mid,
                             groups=estimate_groups(spec.in_channels, mid, spec.g_max))
        self.bn1 = nn.BatchNorm2d(mid)
        self.act1 = build_activation(spec.activation)
        self.shuffle_groups = self.expand.groups
        conv_spec = spec.jetconv or JetConvSpec(mid, levels=spec.levels)
        if conv_spec.in_channels != mid:
            raise InvalidSpecError(
                f"jetconv expects {conv_spec.in_channels} channels, expanded width is {mid}"
            )
        self.jetconv = JetConv(conv_spec, stride=spec.stride, g_max=spec.g_max)
        self.attention = build_attention(spec.attention, mid)
        self.act2 = build_activation(spec.activation)
        self.reduce = GPConv(mid, spec.out_channels,
                             groups=estimate_groups(mid, spec.out_channels, spec.g_max))
        self.bn2 = nn.BatchNorm2d(spec.out_channels)
        if spec.in_channels == spec.out_channels and spec.stride == 1:
            self.skip = nn.Identity()
        else:
            self.skip = nn.Sequential(
                GPConv(spec.in_channels, spec.out_channels,
                       groups=estimate_groups(spec.in_channels, spec.out_channels, spec.g_max),
                       stride=spec.stride),
                nn.BatchNorm2d(spec.out_channels),
            )

    def forward(self, x):
        if x.shape[1] != self.spec.in_channels:
            raise InvalidInputError(f"expected {self.spec.in_channels} channels, got {x.shape[1]}")
        y = self.act1(self.bn1(self.expand(x)))
        y = channel_shuffle(y, self.shuffle_groups)
        y = self.jetconv(y)
        y = self.act2(self.attention(y))
        y = self.bn2(self.reduce(y))
        return y + self.skip(x)


def build_block(spec: JetBlockSpec) -> nn.Module:
    return JetInputBlock(spec) if spec.variant == "input" else JetBlock(spec)


def block_output_shape(spec: JetBlockSpec, input_shape) -> tuple:
    """Output shape as a pure function of (input shape, spec); must agree
    with actual execution.
    """
    n, c, h, w = input_shape
    if c != spec.in_channels:
        raise InvalidInputError(f"expected {spec.in_channels} channels, got {c}")
    def down(v):
        return (v - 1) // spec.stride + 1
    return (n, spec.out_channels, down(h), down(w))
