"""Full encoder-decoder assembly."""

import torch.nn as nn

from .config import ModelConfig, profile_config
from .decoder import Decoder, DecoderSpec
from .encoder import JetNet


class JetSeg(nn.Module):
    """JetNet encoder plus the three-branch decoder; maps (N, 3, H, W)
    images to (N, num_classes, H, W) logits.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = JetNet(config)
        self.decoder = Decoder(DecoderSpec(
            in_channels=config.stage_channels,
            mid_channels=config.decoder_mid_channels,
            head_channels=config.decoder_head_channels,
            num_classes=config.num_classes,
            activation=config.activations[-1],
            g_max=config.g_max,
        ))

    @classmethod
    def from_profile(cls, profile: str, **overrides) -> "JetSeg":
        return cls(profile_config(profile, **overrides))

    def forward(self, x):
        return self.decoder(self.encoder(x))

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
