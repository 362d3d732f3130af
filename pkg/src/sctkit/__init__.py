"""Low-light image enhancement toolkit built around a spatial-channel
transformer (SCT) curve estimator, a task-driven perceptual loss, and
one-pass-evaluation tracking metrics."""

from .curves import CurveMaps, ProjectionConfig, project_step, robust_enhance
from .attention import (
    TokenWindows,
    window_partition,
    window_merge,
    WindowAttention,
    ResFFN,
    TokenMLP,
    TransformerLayer,
    SpatialTransformerLayer,
    ChannelTransformerLayer,
)
from .network import ABLATION_VARIANTS, ConfigError, SctConfig, SctNet, ablation_variant, build_model
from .checkpoint import CheckpointError, load_checkpoint, load_model, save_model
from .task_loss import FeatureStack, FrozenBackbone, LossReport, build_backbone, extract, perceptual_loss
from .data import DatasetError, PairedSample, PairPaths, load_pairs, synth_pairs, write_pairs
from .training import TrainConfig, TrainResult, TrainingError, lr_at_step, train
from .tracking_eval import (
    BoundingBox,
    TrajectoryPair,
    cle,
    iou,
    precision_curve,
    success_auc,
    evaluate_directories,
    read_trajectory,
    write_trajectory,
)

__version__ = "0.1.0"
