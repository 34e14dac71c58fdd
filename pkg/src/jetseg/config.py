"""Model configuration: named device profiles and config-file round-trip."""

import dataclasses
from dataclasses import dataclass
from typing import Tuple

import yaml

from .errors import ConfigError

PROFILES = ("workstation", "agx", "nano")
_STAGES = 3  # residual stages S1..S3; S0 is the stem


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to build a JetSeg model deterministically.

    Stage-indexed tuples cover the residual stages S1..S3; the stem (S0)
    has its own width and branch count. Activations cover S0..S3.
    """

    profile: str = "workstation"
    num_classes: int = 32
    input_size: Tuple[int, int] = (512, 512)
    stem_channels: int = 16
    stem_levels: int = 1
    stage_channels: Tuple[int, int, int] = (24, 32, 48)
    blocks_per_stage: Tuple[int, int, int] = (4, 4, 2)
    jetconv_levels: Tuple[int, int, int] = (3, 2, 1)
    attention: Tuple[str, str, str] = ("cbam", "sam", "ecam")
    activations: Tuple[str, str, str, str] = ("reu", "reu", "tanhexp", "tanhexp")
    expansion_ratio: float = 2.0
    g_max: int = 8
    decoder_mid_channels: int = 32
    decoder_head_channels: int = 24

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        object.__setattr__(self, "blocks_per_stage", tuple(self.blocks_per_stage))
        object.__setattr__(self, "jetconv_levels", tuple(self.jetconv_levels))
        object.__setattr__(self, "attention", tuple(self.attention))
        object.__setattr__(self, "activations", tuple(self.activations))
        self.validate()

    def validate(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"profile: expected one of {PROFILES}, got {self.profile!r}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes: must be >= 2, got {self.num_classes}")
        if len(self.input_size) != 2 or any(s < 16 for s in self.input_size):
            raise ConfigError(f"input_size: expected (H, W) with H, W >= 16, got {self.input_size}")
        if self.stem_channels < 1:
            raise ConfigError(f"stem_channels: must be positive, got {self.stem_channels}")
        for name, value in (("stage_channels", self.stage_channels),
                            ("blocks_per_stage", self.blocks_per_stage),
                            ("jetconv_levels", self.jetconv_levels),
                            ("attention", self.attention)):
            if len(value) != _STAGES:
                raise ConfigError(f"{name}: expected {_STAGES} entries (S1..S3), got {len(value)}")
        if len(self.activations) != _STAGES + 1:
            raise ConfigError(f"activations: expected {_STAGES + 1} entries (S0..S3), got {len(self.activations)}")
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"stage_channels: must be positive, got {self.stage_channels}")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ConfigError(f"blocks_per_stage: must be positive, got {self.blocks_per_stage}")
        for lv in (self.stem_levels, *self.jetconv_levels):
            if lv not in (1, 2, 3):
                raise ConfigError(f"jetconv_levels: levels must be in (1, 2, 3), got {lv}")
        for kind in self.attention:
            if kind not in ("cbam", "sam", "ecam"):
                raise ConfigError(f"attention: unknown kind {kind!r}")
        for act in self.activations:
            if act not in ("reu", "tanhexp"):
                raise ConfigError(f"activations: unknown activation {act!r}")
        if self.expansion_ratio <= 0:
            raise ConfigError(f"expansion_ratio: must be positive, got {self.expansion_ratio}")
        for c in self.stage_channels:
            if (c * self.expansion_ratio) != int(c * self.expansion_ratio):
                raise ConfigError(
                    f"expansion_ratio: {self.expansion_ratio} gives a non-integer "
                    f"expanded width for stage width {c}"
                )
        if self.g_max < 1:
            raise ConfigError(f"g_max: must be >= 1, got {self.g_max}")
        if self.decoder_mid_channels < 1 or self.decoder_head_channels < 1:
            raise ConfigError("decoder_mid_channels/decoder_head_channels: must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def workstation_config(**overrides) -> ModelConfig:
    return ModelConfig(profile="workstation", **overrides)


def agx_config(**overrides) -> ModelConfig:
    defaults = dict(profile="agx", stem_channels=12, stage_channels=(16, 24, 32))
    defaults.update(overrides)
    return ModelConfig(**defaults)


def nano_config(**overrides) -> ModelConfig:
    defaults = dict(profile="nano", stem_channels=8, stage_channels=(12, 16, 24), g_max=4)
    defaults.update(overrides)
    return ModelConfig(**defaults)


_PROFILE_BUILDERS = {
    "workstation": workstation_config,
    "agx": agx_config,
    "nano": nano_config,
}


def profile_config(profile: str, **overrides) -> ModelConfig:
    try:
        builder = _PROFILE_BUILDERS[profile]
    except KeyError:
        raise ConfigError(f"profile: expected one of {PROFILES}, got {profile!r}")
    return builder(**overrides)


def save_config(config: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


def load_config(path) -> ModelConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} does not contain a key-value mapping")
    return ModelConfig.from_dict(data)
