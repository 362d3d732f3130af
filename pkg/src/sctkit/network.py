"""U-shaped CNN encoder/decoder with a spatial-channel transformer bottleneck.

The network estimates curve maps on a fixed-size downscaled copy of the
input (cheap regardless of input resolution), then resizes the maps back to
the input resolution and drives the iterative curve projection with them.
Channel widths double per encoder stage after the stem while the spatial
resolution halves; decoders mirror the encoders with skip concatenation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import LEAKY_SLOPE, ChannelTransformerLayer, SpatialTransformerLayer
from .curves import CurveMaps, ProjectionConfig, robust_enhance


class ConfigError(ValueError):
    """Raised when an architecture configuration violates a constraint."""


@dataclass(frozen=True)
class SctConfig:
    """Architecture and ablation switches.

    ``stages`` is the encoder/decoder stage count K; the bottleneck feature
    has ``stem_channels * 2**(K-1)`` channels at ``estimation_size / 2**K``
    spatial resolution.  Flags select the ablation variants: each attention
    layer can be dropped, the feed-forward swapped for a plain MLP
    (``resffn=False``), the noise map disabled, the whole attention
    bottleneck replaced by convolutions, or enhancement bypassed entirely
    (``enabled=False``).
    """

    stages: int = 4
    stem_channels: int = 32
    window: int = 4
    iterations: int = 8
    estimation_size: int = 128
    spatial_attention: bool = True
    channel_attention: bool = True
    resffn: bool = True
    denoise: bool = True
    cnn_bottleneck: bool = False
    enabled: bool = True
    num_heads: int = 4
    expansion: int = 2

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.stem_channels * 2**i for i in range(self.stages))

    @property
    def bottleneck_channels(self) -> int:
        return self.stem_channels * 2 ** (self.stages - 1)

    @property
    def bottleneck_size(self) -> int:
        return self.estimation_size // 2**self.stages

    def validate(self) -> "SctConfig":
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1, got {self.stages}")
        if self.stem_channels < 1:
            raise ConfigError(f"stem_channels must be >= 1, got {self.stem_channels}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.num_heads < 1:
            raise ConfigError(f"num_heads must be >= 1, got {self.num_heads}")
        if self.expansion < 1:
            raise ConfigError(f"expansion must be >= 1, got {self.expansion}")
        scale = 2**self.stages
        if self.estimation_size % scale:
            raise ConfigError(
                f"estimation_size {self.estimation_size} is not divisible by 2**stages = {scale}"
            )
        if self.estimation_size % (self.window * scale):
            raise ConfigError(
                f"estimation_size {self.estimation_size} is not divisible by "
                f"window * 2**stages = {self.window * scale}, so the bottleneck grid "
                f"cannot be partitioned into {self.window}x{self.window} windows"
            )
        if not self.enabled:
            return self
        if self.cnn_bottleneck and (self.spatial_attention or self.channel_attention):
            raise ConfigError("cnn_bottleneck replaces the attention bottleneck; disable both attention flags")
        channels = self.bottleneck_channels
        extent = self.bottleneck_size**2
        if self.spatial_attention:
            if channels % self.num_heads:
                raise ConfigError(
                    f"bottleneck channels {channels} not divisible by num_heads {self.num_heads}"
                )
        if self.channel_attention:
            group = self.window**2
            if channels % group:
                raise ConfigError(
                    f"bottleneck channels {channels} not divisible by window**2 = {group} "
                    "(channel-token windows)"
                )
            if extent % self.num_heads:
                raise ConfigError(
                    f"bottleneck extent {extent} not divisible by num_heads {self.num_heads}"
                )
            if self.resffn and int(channels**0.5) ** 2 != channels:
                raise ConfigError(
                    f"bottleneck channels {channels} must be a perfect square for the "
                    "channel-token ResFFN grid reshape"
                )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SctConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


TINY_CONFIG = SctConfig(stages=2, stem_channels=8, window=2, iterations=4, estimation_size=32)

ABLATION_VARIANTS: dict[str, SctConfig] = {
    "full": SctConfig(),
    "no_CA": SctConfig(channel_attention=False),
    "no_SA": SctConfig(spatial_attention=False),
    "cnn_unet": SctConfig(spatial_attention=False, channel_attention=False, resffn=False, cnn_bottleneck=True),
    "mlp_ffn": SctConfig(resffn=False),
    "no_denoise": SctConfig(denoise=False),
    "none": SctConfig(
        spatial_attention=False,
        channel_attention=False,
        resffn=False,
        denoise=False,
        enabled=False,
    ),
}


def ablation_variant(name: str) -> SctConfig:
    """Config for a named ablation variant; ``none`` disables enhancement."""
    try:
        return ABLATION_VARIANTS[name]
    except KeyError:
        raise ValueError(
            f"unknown ablation variant {name!r}; valid choices: {', '.join(ABLATION_VARIANTS)}"
        ) from None


class ConvBlock(nn.Module):
    """3x3 convolution followed by a leaky rectifier."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x):
        return F.leaky_relu(self.conv(x), LEAKY_SLOPE)


class EncoderStage(nn.Module):
    """Two 3x3 conv + leaky-rectifier layers, then a strided 2x2 downsampling conv."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = ConvBlock(in_channels, out_channels)
        self.conv2 = ConvBlock(out_channels, out_channels)
        self.down = nn.Conv2d(out_channels, out_channels, 2, stride=2)

    def forward(self, x):
        skip = self.conv2(self.conv1(x))
        return skip, F.leaky_relu(self.down(skip), LEAKY_SLOPE)


class DecoderStage(nn.Module):
    """Bilinear 2x upsample + 3x3 conv, skip concatenation, two fusing convs."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.up = ConvBlock(in_channels, skip_channels)
        self.fuse1 = ConvBlock(2 * skip_channels, skip_channels)
        self.fuse2 = ConvBlock(skip_channels, out_channels)

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.up(x)
        return self.fuse2(self.fuse1(torch.cat([x, skip], dim=1)))


class SctNet(nn.Module):
    """Curve-map estimator plus the robust projection, end to end.

    ``forward`` is differentiable and batched; :meth:`enhance` and
    :meth:`estimate_curves` are no-grad conveniences that also accept
    unbatched 3xHxW images.  With ``enabled=False`` the module holds no
    parameters and passes inputs through unchanged.
    """

    def __init__(self, config: SctConfig):
        super().__init__()
        config.validate()
        self.config = config
        if not config.enabled:
            return
        widths = config.widths
        ins = (3,) + widths[:-1]
        self.encoders = nn.ModuleList(EncoderStage(i, o) for i, o in zip(ins, widths))

        channels = config.bottleneck_channels
        extent = config.bottleneck_size**2
        bottleneck: list[nn.Module] = []
        if config.cnn_bottleneck:
            bottleneck = [ConvBlock(channels, channels), ConvBlock(channels, channels)]
        else:
            if config.spatial_attention:
                bottleneck.append(
                    SpatialTransformerLayer(
                        channels, config.window, config.num_heads, config.resffn, config.expansion
                    )
                )
            if config.channel_attention:
                bottleneck.append(
                    ChannelTransformerLayer(
                        channels, extent, config.window, config.num_heads, config.resffn, config.expansion
                    )
                )
        self.bottleneck = nn.ModuleList(bottleneck)

        decoders = []
        for i in reversed(range(config.stages)):
            # the deeper decoder (or the bottleneck, at i = K-1) hands over widths[i] channels
            out_ch = widths[i - 1] if i > 0 else widths[0]
            decoders.append(DecoderStage(widths[i], widths[i], out_ch))
        self.decoders = nn.ModuleList(decoders)
        self.head = nn.Conv2d(widths[0], 6 if config.denoise else 3, 3, padding=1)

    def _estimate(self, batch: torch.Tensor) -> CurveMaps:
        size = self.config.estimation_size
        h, w = batch.shape[-2:]
        x = batch
        if (h, w) != (size, size):
            x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
        skips = []
        for enc in self.encoders:
            skip, x = enc(x)
            skips.append(skip)
        for layer in self.bottleneck:
            x = layer(x)
        for dec, skip in zip(self.decoders, reversed(skips)):
            x = dec(x, skip)
        maps = torch.tanh(self.head(x))
        if (h, w) != (size, size):
            # bilinear resize interpolates convexly, so values stay in [-1, 1]
            maps = F.interpolate(maps, size=(h, w), mode="bilinear", align_corners=False)
        illumination = maps[:, :3]
        noise = maps[:, 3:] if self.config.denoise else torch.zeros_like(illumination)
        return CurveMaps(illumination=illumination, noise=noise)

    def forward(self, batch: torch.Tensor) -> tuple[torch.Tensor, CurveMaps]:
        """Enhance a (batch, 3, H, W) tensor; returns the output and the curve maps."""
        if batch.dim() != 4 or batch.shape[1] != 3:
            raise ValueError(f"expected a (batch, 3, H, W) tensor, got shape {tuple(batch.shape)}")
        if min(batch.shape[-2:]) < 2**self.config.stages:
            raise ValueError(
                f"input sides must be >= 2**stages = {2**self.config.stages}, got {tuple(batch.shape[-2:])}"
            )
        if not self.config.enabled:
            zeros = torch.zeros_like(batch)
            return batch, CurveMaps(illumination=zeros, noise=zeros.clone())
        maps = self._estimate(batch)
        enhanced = robust_enhance(batch, maps, ProjectionConfig(iterations=self.config.iterations))
        return enhanced, maps

    @torch.no_grad()
    def estimate_curves(self, image: torch.Tensor) -> CurveMaps:
        """Curve maps for a 3xHxW image (or batch), at the input resolution."""
        batch, squeeze = _as_batch(image)
        maps = self.forward(batch)[1]
        if squeeze:
            return CurveMaps(maps.illumination.squeeze(0), maps.noise.squeeze(0))
        return maps

    @torch.no_grad()
    def enhance(self, image: torch.Tensor) -> torch.Tensor:
        """Enhanced copy of a 3xHxW image (or batch), same resolution."""
        batch, squeeze = _as_batch(image)
        out = self.forward(batch)[0]
        return out.squeeze(0) if squeeze else out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _as_batch(image: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if image.dim() == 3:
        return image.unsqueeze(0), True
    if image.dim() == 4:
        return image, False
    raise ValueError(f"expected a 3xHxW image or a batch, got shape {tuple(image.shape)}")


def build_model(config: SctConfig, seed: int = 0) -> SctNet:
    """Construct a model with deterministic seed-driven initialization."""
    torch.manual_seed(seed)
    return SctNet(config)
