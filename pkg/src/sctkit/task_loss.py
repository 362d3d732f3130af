"""Perceptual training loss measured through a frozen feature backbone.

The enhancer is trained to minimize the feature-space distance between its
output and the normal-light target, measured at several depths of a frozen
convolutional backbone in the style of the compact feature extractors used
by tracking networks.  Per tapped layer the loss is the squared L2 distance
normalized by the feature volume ``c*h*w``; the total is the sum over taps.
The backbone never receives gradient updates: weights are either loaded
from a checkpoint or drawn once from a seeded init and frozen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

TAP_LAYERS = (3, 4, 5)

# (out_channels, kernel, stride) per stage; total stride 8, and every tapped
# stage strides so the tapped maps shrink strictly with depth
_STAGES = ((32, 5, 2), (64, 3, 1), (96, 3, 1), (96, 3, 2), (64, 3, 2))

MIN_INPUT_SIDE = 8  # below this the deepest tap would collapse under 1x1


@dataclass
class FeatureStack:
    """Ordered per-layer feature maps tapped from the backbone."""

    layers: tuple[int, ...]
    features: list[torch.Tensor]

    def __iter__(self):
        return iter(zip(self.layers, self.features))

    def __len__(self):
        return len(self.features)


@dataclass
class LossReport:
    """Total perceptual loss and its per-layer terms (total = their sum)."""

    total: torch.Tensor
    per_layer: dict[int, torch.Tensor]


class FrozenBackbone(nn.Module):
    """Five convolution stages, total stride 8, parameters permanently frozen.

    Stage widths (32, 64, 96, 96, 64) with kernel sizes (5, 3, 3, 3, 3),
    strides (2, 1, 1, 2, 2) and half-kernel padding; a ReLU follows every
    conv and features are tapped post-activation at stages 3, 4 and 5.
    """

    def __init__(self):
        super().__init__()
        convs = []
        in_ch = 3
        for out_ch, kernel, stride in _STAGES:
            convs.append(nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def config_dict(self) -> dict:
        return {"stages": [list(s) for s in _STAGES], "taps": list(TAP_LAYERS)}

    def forward(self, batch: torch.Tensor) -> FeatureStack:
        if batch.dim() != 4 or batch.shape[1] != 3:
            raise ValueError(f"expected a (batch, 3, H, W) tensor, got shape {tuple(batch.shape)}")
        if min(batch.shape[-2:]) < MIN_INPUT_SIDE:
            raise ValueError(
                f"input sides must be >= {MIN_INPUT_SIDE} so no tapped feature map "
                f"collapses below 1x1, got {tuple(batch.shape[-2:])}"
            )
        taps = []
        x = batch
        for index, conv in enumerate(self.convs, start=1):
            x = F.relu(conv(x))
            if index in TAP_LAYERS:
                taps.append(x)
        return FeatureStack(layers=TAP_LAYERS, features=taps)

    def parameter_checksum(self) -> str:
        """SHA-256 over all parameter bytes, for immutability checks."""
        digest = hashlib.sha256()
        for name, p in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


def build_backbone(seed: int = 0) -> FrozenBackbone:
    """Backbone with deterministic seed-driven (frozen) initialization."""
    torch.manual_seed(seed)
    return FrozenBackbone()


def extract(backbone: FrozenBackbone, image: torch.Tensor) -> FeatureStack:
    """Feature stack for a 3xHxW image or a (batch, 3, H, W) tensor."""
    if image.dim() == 3:
        stack = backbone(image.unsqueeze(0))
        return FeatureStack(stack.layers, [f.squeeze(0) for f in stack.features])
    return backbone(image)


def feature_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Squared L2 distance normalized by the feature volume (mean squared difference).

    Doubling the spatial extent at a constant per-element difference leaves
    the value unchanged.
    """
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def perceptual_loss(backbone: FrozenBackbone, enhanced: torch.Tensor, target: torch.Tensor) -> LossReport:
    """Per-layer normalized squared feature distances between two images.

    Gradients flow into ``enhanced`` only; the target features are computed
    without grad.  Batched inputs average the per-layer terms over the batch.
    """
    if enhanced.shape != target.shape:
        raise ValueError(
            f"enhanced shape {tuple(enhanced.shape)} does not match target shape {tuple(target.shape)}"
        )
    enhanced_stack = extract(backbone, enhanced)
    with torch.no_grad():
        target_stack = extract(backbone, target)
    per_layer = {
        layer: feature_distance(fa, fb)
        for (layer, fa), fb in zip(enhanced_stack, target_stack.features)
    }
    total = sum(per_layer.values())
    return LossReport(total=total, per_layer=per_layer)
