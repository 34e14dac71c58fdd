"""JetNet encoder: stem S0 plus residual stages S1..S3 emitting features
at strides 4, 8 and 16.
"""

from typing import List

import torch.nn as nn

from .blocks import JetBlockSpec, JetBlock, JetInputBlock
from .config import ModelConfig
from .errors import InvalidInputError

ENCODER_STRIDES = (4, 8, 16)


class JetNet(nn.Module):
    """Stem at stride 2, then three residual stages whose first block is
    strided, so stage outputs sit at strides 4, 8 and 16. Input spatial
    dims must be divisible by 16.
    """

    def __init__(self, config: ModelConfig, in_channels: int = 3):
        super().__init__()
        self.config = config
        self.stem = JetInputBlock(JetBlockSpec(
            variant="input",
            in_channels=in_channels,
            out_channels=config.stem_channels,
            stride=2,
            levels=config.stem_levels,
            activation=config.activations[0],
            g_max=config.g_max,
        ))
        self.stages = nn.ModuleList()
        width = config.stem_channels
        for i in range(3):
            blocks = []
            for j in range(config.blocks_per_stage[i]):
                blocks.append(JetBlock(JetBlockSpec(
                    variant="standard",
                    in_channels=width if j == 0 else config.stage_channels[i],
                    out_channels=config.stage_channels[i],
                    stride=2 if j == 0 else 1,
                    expansion_ratio=config.expansion_ratio,
                    levels=config.jetconv_levels[i],
                    attention=config.attention[i],
                    activation=config.activations[i + 1],
                    g_max=config.g_max,
                )))
            width = config.stage_channels[i]
            self.stages.append(nn.Sequential(*blocks))

    @property
    def out_channels(self):
        return tuple(self.config.stage_channels)

    def forward(self, x) -> List:
        if x.dim() != 4:
            raise InvalidInputError(f"expected a 4-D (N, C, H, W) tensor, got {x.dim()}-D")
        h, w = x.shape[2], x.shape[3]
        if h % 16 or w % 16:
            raise InvalidInputError(
                f"input spatial dims must be divisible by 16, got {h}x{w}"
            )
        y = self.stem(x)
        features = []
        for stage in self.stages:
            y = stage(y)
            features.append(y)
        return features


def build_encoder(config: ModelConfig) -> JetNet:
    """Construct a JetNet from a validated config."""
    config.validate()
    return JetNet(config)
