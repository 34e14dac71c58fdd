"""JetSeg: a lightweight real-time semantic segmentation stack with
analytic complexity accounting and a composite region loss.
"""

from .blocks import JetBlock, JetBlockSpec, JetInputBlock, build_block
from .complexity import ComplexityReport, LayerSpec, layer_flops, model_complexity
from .config import ModelConfig, load_config, profile_config, save_config
from .data import (
    BlobDataset,
    CamVidDataset,
    DatasetSplits,
    SplitManifest,
    build_splits,
    load_sample,
    split_dataset,
    synthetic_blobs,
)
from .decoder import Decoder, DecoderSpec
from .encoder import JetNet, build_encoder
from .engine import BenchResult, RunRecord, analyze, benchmark, evaluate, train
from .errors import (
    AnalysisError,
    ConfigError,
    InvalidInputError,
    InvalidSpecError,
    JetSegError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .losses import (
    BoundaryStats,
    ClassWeights,
    ConfusionStats,
    JetLoss,
    boundary_stats,
    class_weights,
    hard_confusion,
    jetloss,
    jetloss_components,
    miou,
    per_class_iou,
    soft_confusion,
)
from .model import JetSeg
from .ops import (
    CBAM,
    AttentionKind,
    CDDConv,
    ChannelAttention,
    EfficientChannelAttention,
    GPConv,
    JetConv,
    JetConvSpec,
    REU,
    SpatialAttention,
    TanhExp,
    build_attention,
    channel_shuffle,
    estimate_groups,
    reu,
    tanhexp,
)

__version__ = "0.1.0"
