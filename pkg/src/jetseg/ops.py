"""Elementary operators: JetConv and its CDDC branches, channel shuffle,
grouped pointwise convolution, lightweight activations, and attention gates.

All convolutions are bias-free (they are either depthwise feature extractors
or are followed by batch normalization at the block level).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import torch
import torch.nn as nn

from .errors import InvalidInputError, InvalidSpecError

KERNEL_MENU = (3, 5, 7)
DILATION_MENU = (1, 2, 3)


def estimate_groups(c_in: int, c_out: int, g_max: int = 8) -> int:
    """Largest group count <= g_max dividing both channel counts.

    g=1 is always valid, so this never fails.
    """
    if c_in < 1 or c_out < 1 or g_max < 1:
        raise InvalidSpecError(f"channel/group counts must be >= 1, got ({c_in}, {c_out}, {g_max})")
    g = min(g_max, math.gcd(c_in, c_out))
    while c_in % g or c_out % g:
        g -= 1
    return g


def channel_shuffle(x: torch.Tensor, groups: int) -> torch.Tensor:
    """Interleave channel groups: output channel j reads input channel
    (j mod g) * (C/g) + j // g. A pure permutation, values untouched.
    """
    if x.dim() != 4:
        raise InvalidInputError(f"expected a 4-D tensor, got {x.dim()}-D")
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise InvalidSpecError(f"groups={groups} does not divide {c} channels")
    if groups == 1:
        return x
    x = x.reshape(n, groups, c // groups, h, w)
    x = x.transpose(1, 2).contiguous()
    return x.reshape(n, c, h, w)


def reu(x: torch.Tensor) -> torch.Tensor:
    """Rectified exponential unit: x for x >= 0, x * exp(x) for x < 0."""
    return torch.where(x >= 0, x, x * torch.exp(x.clamp(max=0)))


def tanhexp(x: torch.Tensor) -> torch.Tensor:
    """TanhExp activation: x * tanh(exp(x)).

    The exponent is clamped at 20 where tanh is already saturated to 1
    within float precision; this keeps the backward pass free of inf*0.
    """
    return x * torch.tanh(torch.exp(x.clamp(max=20.0)))


class REU(nn.Module):
    def forward(self, x):
        return reu(x)


class TanhExp(nn.Module):
    def forward(self, x):
        return tanhexp(x)


_ACTIVATIONS = {"reu": REU, "tanhexp": TanhExp}


def build_activation(name: str) -> nn.Module:
    try:
        return _ACTIVATIONS[name.lower()]()
    except KeyError:
        raise InvalidSpecError(f"unknown activation '{name}', expected one of {sorted(_ACTIVATIONS)}")


class GPConv(nn.Conv2d):
    """Grouped pointwise (1x1) convolution. Divisibility is validated up
    front so misuse raises InvalidSpecError instead of a backend error.
    """

    def __init__(self, in_channels, out_channels, groups=1, stride=1):
        if groups < 1 or in_channels % groups or out_channels % groups:
            raise InvalidSpecError(
                f"groups={groups} must divide in_channels={in_channels} and out_channels={out_channels}"
            )
        super().__init__(in_channels, out_channels, kernel_size=1, stride=stride,
                         groups=groups, bias=False)


class CDDConv(nn.Module):
    """Combined dilated depthwise convolution branch.

    A dilated asymmetric depthwise pair, (k x 1) then (1 x k) at dilation d,
    followed by a non-asymmetric, non-dilated k x k depthwise convolution.
    Symmetric padding preserves spatial dims; stride (applied on the first
    convolution) halves them.
    """

    def __init__(self, channels: int, kernel: int, dilation: int = 1, stride: int = 1):
        super().__init__()
        if kernel % 2 == 0 or kernel not in KERNEL_MENU:
            raise InvalidSpecError(f"kernel must be an odd size in {KERNEL_MENU}, got {kernel}")
        if dilation < 1:
            raise InvalidSpecError(f"dilation must be >= 1, got {dilation}")
        pad = dilation * (kernel - 1) // 2
        self.vertical = nn.Conv2d(channels, channels, (kernel, 1), stride=stride,
                                  padding=(pad, 0), dilation=(dilation, 1),
                                  groups=channels, bias=False)
        self.horizontal = nn.Conv2d(channels, channels, (1, kernel),
                                    padding=(0, pad), dilation=(1, dilation),
                                    groups=channels, bias=False)
        self.square = nn.Conv2d(channels, channels, kernel, padding=kernel // 2,
                                groups=channels, bias=False)

    def forward(self, x):
        if x.dim() != 4:
            raise InvalidInputError(f"expected a 4-D tensor, got {x.dim()}-D")
        return self.square(self.horizontal(self.vertical(x)))


@dataclass(frozen=True)
class JetConvSpec:
    """Geometry of one JetConv: number of CDDC branches plus the per-branch
    kernel and dilation menu. Output channels equal input channels so the
    residual sum is well defined.
    """

    in_channels: int
    levels: int = 1
    kernel_sizes: Optional[Sequence[int]] = None
    dilation_rates: Optional[Sequence[int]] = None
    groups: Optional[int] = None  # projection groups; None = estimate_groups

    def __post_init__(self):
        if self.in_channels < 1:
            raise InvalidSpecError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.levels not in (1, 2, 3):
            raise InvalidSpecError(f"levels must be 1, 2 or 3, got {self.levels}")
        kernels = tuple(self.kernel_sizes) if self.kernel_sizes is not None else KERNEL_MENU[: self.levels]
        dilations = tuple(self.dilation_rates) if self.dilation_rates is not None else DILATION_MENU[: self.levels]
        if len(kernels) != self.levels or len(dilations) != self.levels:
            raise InvalidSpecError(
                f"need one kernel and one dilation per level: levels={self.levels}, "
                f"kernels={kernels}, dilations={dilations}"
            )
        for k in kernels:
            if k % 2 == 0 or k not in KERNEL_MENU:
                raise InvalidSpecError(f"kernel sizes must be odd and in {KERNEL_MENU}, got {k}")
        for d in dilations:
            if d < 1:
                raise InvalidSpecError(f"dilation rates must be >= 1, got {d}")
        if self.groups is not None and (self.groups < 1 or self.in_channels % self.groups):
            raise InvalidSpecError(f"groups={self.groups} does not divide in_channels={self.in_channels}")
        object.__setattr__(self, "kernel_sizes", kernels)
        object.__setattr__(self, "dilation_rates", dilations)


class JetConv(nn.Module):
    """Residual multi-branch operator built from CDDC branches.

    Five stages: (1) `levels` parallel CDDC branches, (2) cumulative additive
    fusion s_i = s_{i-1} + b_i, (3) channel concatenation of the partial sums,
    (4) grouped pointwise projection from levels*C back to the output width,
    (5) residual addition of the input.

    With out_channels == in_channels and stride 1 (the contract case) the
    residual is the identity; otherwise the shortcut is a strided grouped
    1x1 projection.
    """

    def __init__(self, spec: JetConvSpec, out_channels: Optional[int] = None,
                 stride: int = 1, g_max: int = 8):
        super().__init__()
        if stride not in (1, 2):
            raise InvalidSpecError(f"stride must be 1 or 2, got {stride}")
        self.spec = spec
        self.stride = stride
        self.out_channels = out_channels if out_channels is not None else spec.in_channels
        c = spec.in_channels
        self.branches = nn.ModuleList(
            CDDConv(c, k, d, stride=stride)
            for k, d in zip(spec.kernel_sizes, spec.dilation_rates)
        )
        concat_channels = spec.levels * c
        groups = spec.groups
        if groups is None:
            groups = estimate_groups(concat_channels, self.out_channels, g_max)
        elif concat_channels % groups or self.out_channels % groups:
            raise InvalidSpecError(
                f"groups={groups} does not divide concat width {concat_channels} "
                f"and out_channels {self.out_channels}"
            )
        self.project = GPConv(concat_channels, self.out_channels, groups=groups)
        if self.out_channels == c and stride == 1:
            self.shortcut = nn.Identity()
        else:
            self.shortcut = GPConv(c, self.out_channels,
                                   groups=estimate_groups(c, self.out_channels, g_max),
                                   stride=stride)

    def forward(self, x):
        if x.dim() != 4:
            raise InvalidInputError(f"expected a 4-D tensor, got {x.dim()}-D")
        if x.shape[1] != self.spec.in_channels:
            raise InvalidInputError(
                f"expected {self.spec.in_channels} channels, got {x.shape[1]}"
            )
        partial = None
        sums = []
        for branch in self.branches:
            b = branch(x)
            partial = b if partial is None else partial + b
            sums.append(partial)
        y = torch.cat(sums, dim=1) if len(sums) > 1 else sums[0]
        return self.project(y) + self.shortcut(x)


class AttentionKind(str, Enum):
    CBAM = "cbam"
    SAM = "sam"
    ECAM = "ecam"


class ChannelAttention(nn.Module):
    """Channel gate: shared two-layer bottleneck over average- and
    max-pooled channel descriptors, sigmoid-activated.
    """

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        self.max_pool = nn.AdaptiveMaxPool2d(1)
        self.fc = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )
        self.sigmoid = nn.Sigmoid()

    def forward(self, x):
        gate = self.fc(self.avg_pool(x)) + self.fc(self.max_pool(x))
        return x * self.sigmoid(gate)


class ChannelPool(nn.Module):
    """Stack the channelwise average and maximum into a 2-channel map."""

    def forward(self, x):
        if x.dim() != 4:
            raise InvalidInputError(f"expected a 4-D tensor, got {x.dim()}-D")
        return torch.cat([torch.mean(x, dim=1, keepdim=True),
                          torch.max(x, dim=1, keepdim=True)[0]], dim=1)


class SpatialAttention(nn.Module):
    """Spatial gate: k x k convolution over channelwise avg and max maps."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.pool = ChannelPool()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False)
        self.sigmoid = nn.Sigmoid()

    def forward(self, x):
        gate = self.conv(self.pool(x))
        return x * self.sigmoid(gate)


class CBAM(nn.Module):
    """Channel gate followed by spatial gate."""

    def __init__(self, channels: int, reduction: int = 8, spatial_kernel: int = 7):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention(spatial_kernel)

    def forward(self, x):
        return self.spatial(self.channel(x))


def eca_kernel_size(channels: int) -> int:
    """Adaptive 1-D kernel size: nearest odd to |log2(C)/2 + 0.5|."""
    t = int(abs(math.log2(channels) / 2 + 0.5))
    return max(t if t % 2 else t + 1, 1)


class EfficientChannelAttention(nn.Module):
    """Channel gate from a 1-D convolution of adaptive kernel size over the
    average-pooled channel descriptor.
    """

    def __init__(self, channels: int, kernel_size: Optional[int] = None):
        super().__init__()
        k = kernel_size if kernel_size is not None else eca_kernel_size(channels)
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        self.conv = nn.Conv1d(1, 1, k, padding=k // 2, bias=False)
        self.sigmoid = nn.Sigmoid()

    def forward(self, x):
        if x.dim() != 4:
            raise InvalidInputError(f"expected a 4-D tensor, got {x.dim()}-D")
        n, c, _, _ = x.shape
        y = self.avg_pool(x).reshape(n, 1, c)
        y = self.conv(y)
        gate = self.sigmoid(y).reshape(n, c, 1, 1)
        return x * gate


def build_attention(kind, channels: int) -> nn.Module:
    kind = AttentionKind(kind.lower() if isinstance(kind, str) else kind)
    if kind is AttentionKind.CBAM:
        return CBAM(channels)
    if kind is AttentionKind.SAM:
        return SpatialAttention()
    return EfficientChannelAttention(channels)
