"""Window-based multi-head self-attention with relative position bias.

Self-attention runs independently inside non-overlapping windows of a token
grid, with a learnable relative position bias added to the logits:
``SoftMax(Q Kᵀ / sqrt(d) + B) V`` per head.  The transformer layer wires
attention and a feed-forward block with pre-norm residuals.  The
feed-forward is either a residual convolution block (:class:`ResFFN`) that
preserves local context, or a plain :class:`TokenMLP`.

Two token layouts are supported on top of the same machinery:

* spatial tokens — feature-map positions grouped into MxM windows, embedded
  by channel, with a 2D relative position bias;
* channel tokens — feature channels grouped into windows of M² consecutive
  channels, embedded by the flattened spatial extent, with a 1D bias
  (channel indices have no 2D geometry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

LEAKY_SLOPE = 0.2


def _window_pair(window) -> tuple[int, int]:
    if isinstance(window, int):
        return window, window
    wh, ww = window
    return int(wh), int(ww)


@dataclass
class TokenWindows:
    """Non-overlapping token windows plus the layout needed to invert them."""

    windows: torch.Tensor  # (num_windows, tokens_per_window, dim)
    origin_shape: tuple[int, ...]  # shape of the pre-partition grid
    window: tuple[int, int]


def window_partition(grid: torch.Tensor, window) -> TokenWindows:
    """Split a 2D token grid into non-overlapping windows.

    ``grid`` is (H, W, dim) or (batch, H, W, dim); ``window`` is a side
    length M or an (Mh, Mw) pair.  Both grid side lengths must be divisible
    by the window — there is no implicit padding.  Every grid element lands
    in exactly one window and :func:`window_merge` is a bit-exact inverse.
    """
    wh, ww = _window_pair(window)
    if wh < 1 or ww < 1:
        raise ValueError(f"window must be positive, got {(wh, ww)}")
    if grid.dim() == 3:
        batched = grid.unsqueeze(0)
    elif grid.dim() == 4:
        batched = grid
    else:
        raise ValueError(f"expected a (H, W, dim) or (batch, H, W, dim) grid, got shape {tuple(grid.shape)}")
    b, h, w, dim = batched.shape
    if h % wh or w % ww:
        raise ValueError(f"grid {h}x{w} is not evenly divisible by window {wh}x{ww}")
    tiles = batched.view(b, h // wh, wh, w // ww, ww, dim)
    windows = tiles.permute(0, 1, 3, 2, 4, 5).reshape(-1, wh * ww, dim)
    return TokenWindows(windows=windows, origin_shape=tuple(grid.shape), window=(wh, ww))


def window_merge(tw: TokenWindows) -> torch.Tensor:
    """Reassemble windows into the original grid (exact inverse of partition)."""
    wh, ww = tw.window
    shape = tw.origin_shape
    if len(shape) == 3:
        b, (h, w, dim), squeeze = 1, shape, True
    elif len(shape) == 4:
        (b, h, w, dim), squeeze = shape, False
    else:
        raise ValueError(f"inconsistent origin_shape {shape}")
    expected = (b * (h // wh) * (w // ww), wh * ww, dim)
    if h % wh or w % ww or tuple(tw.windows.shape) != expected:
        raise ValueError(
            f"windows of shape {tuple(tw.windows.shape)} are inconsistent with "
            f"origin_shape {shape} and window {wh}x{ww}"
        )
    tiles = tw.windows.view(b, h // wh, w // ww, wh, ww, dim)
    grid = tiles.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, dim)
    return grid.squeeze(0) if squeeze else grid


class RelativePositionBias2D(nn.Module):
    """Learnable logit bias indexed by 2D token offsets inside an MxM window.

    The table holds (2M-1)² entries per head; the (M², M²) bias matrix is
    materialized by indexing it with the pairwise row/column offsets.
    """

    def __init__(self, window: int, num_heads: int):
        super().__init__()
        self.window = window
        self.table = nn.Parameter(torch.empty((2 * window - 1) ** 2, num_heads))
        nn.init.trunc_normal_(self.table, std=0.02)
        coords = torch.stack(
            torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij"), dim=-1
        ).reshape(-1, 2)
        rel = coords[:, None, :] - coords[None, :, :] + window - 1  # offsets in [0, 2M-2]
        index = rel[..., 0] * (2 * window - 1) + rel[..., 1]
        self.register_buffer("index", index, persistent=False)

    @property
    def tokens(self) -> int:
        return self.window * self.window

    def forward(self) -> torch.Tensor:
        return self.table[self.index].permute(2, 0, 1)  # (num_heads, M², M²)


class RelativePositionBias1D(nn.Module):
    """Learnable logit bias indexed by 1D offsets inside a window of ``length`` tokens."""

    def __init__(self, length: int, num_heads: int):
        super().__init__()
        self.length = length
        self.table = nn.Parameter(torch.empty(2 * length - 1, num_heads))
        nn.init.trunc_normal_(self.table, std=0.02)
        pos = torch.arange(length)
        index = pos[:, None] - pos[None, :] + length - 1
        self.register_buffer("index", index, persistent=False)

    @property
    def tokens(self) -> int:
        return self.length

    def forward(self) -> torch.Tensor:
        return self.table[self.index].permute(2, 0, 1)  # (num_heads, length, length)


class WindowAttention(nn.Module):
    """Multi-head self-attention inside one window.

    Per head: ``SoftMax(Q Kᵀ / sqrt(d) + B) V`` with d the head dimension and
    B the materialized relative position bias; head outputs are concatenated
    and projected.
    """

    def __init__(self, dim: int, num_heads: int, position_bias: nn.Module):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"embed dim {dim} is not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = nn.Linear(dim, dim)
        self.to_out = nn.Linear(dim, dim)
        self.position_bias = position_bias

    def _heads(self, x: torch.Tensor, proj: nn.Linear) -> torch.Tensor:
        nw, t, _ = x.shape
        return proj(x).view(nw, t, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, windows: torch.Tensor, return_weights: bool = False):
        """Attend within each window; ``windows`` is (num_windows, tokens, dim)."""
        if windows.dim() != 3 or windows.shape[-1] != self.dim:
            raise ValueError(
                f"expected (num_windows, tokens, {self.dim}) windows, got shape {tuple(windows.shape)}"
            )
        nw, t, _ = windows.shape
        if t != self.position_bias.tokens:
            raise ValueError(
                f"window holds {t} tokens but the position bias covers {self.position_bias.tokens}"
            )
        q = self._heads(windows, self.to_q)  # (nw, heads, t, head_dim)
        k = self._heads(windows, self.to_k)
        v = self._heads(windows, self.to_v)
        logits = q @ k.transpose(-2, -1) * self.scale + self.position_bias().unsqueeze(0)
        weights = logits.softmax(dim=-1)  # rows sum to 1
        out = (weights @ v).transpose(1, 2).reshape(nw, t, self.dim)
        out = self.to_out(out)
        if return_weights:
            return out, weights
        return out


class ResFFN(nn.Module):
    """Feed-forward block with a residual convolution branch.

    The token sequence is linearly expanded, reshaped to a square 2D grid,
    and a branch of a 3x3 convolution followed by a 3x3 depthwise
    convolution (leaky rectifier in between) is added back onto the grid;
    the result is flattened and linearly projected.  With zero convolution
    weights the block degenerates to two chained linear transforms.
    """

    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        hidden = dim * expansion
        self.fc_in = nn.Linear(dim, hidden)
        self.conv = nn.Conv2d(hidden, hidden, 3, padding=1)
        self.dwconv = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.fc_out = nn.Linear(hidden, dim)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b, n, _ = tokens.shape
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError(f"token count {n} is not a perfect square, cannot reshape to a 2D grid")
        h = self.fc_in(tokens)
        grid = h.transpose(1, 2).reshape(b, -1, side, side)
        grid = grid + self.dwconv(F.leaky_relu(self.conv(grid), LEAKY_SLOPE))
        h = grid.reshape(b, -1, n).transpose(1, 2)
        return self.fc_out(h)


class TokenMLP(nn.Module):
    """Plain two-layer feed-forward (the ablation substitute for ResFFN)."""

    def __init__(self, dim: int, expansion: int = 2):
        super().__init__()
        self.fc_in = nn.Linear(dim, dim * expansion)
        self.fc_out = nn.Linear(dim * expansion, dim)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.fc_out(F.leaky_relu(self.fc_in(tokens), LEAKY_SLOPE))


class TransformerLayer(nn.Module):
    """Pre-norm windowed attention plus feed-forward over a 2D token grid.

    ``grid' = W-MSA(LN(grid)) + grid``; ``out = FFN(LN(grid')) + grid'``.
    The feed-forward runs on the full token sequence, not per window.
    """

    def __init__(
        self,
        dim: int,
        window,
        num_heads: int = 4,
        use_resffn: bool = True,
        expansion: int = 2,
        bias_1d: bool = False,
    ):
        super().__init__()
        wh, ww = _window_pair(window)
        if bias_1d:
            bias = RelativePositionBias1D(wh * ww, num_heads)
        else:
            if wh != ww:
                raise ValueError(f"2D position bias requires a square window, got {wh}x{ww}")
            bias = RelativePositionBias2D(wh, num_heads)
        self.window = (wh, ww)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, bias)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = ResFFN(dim, expansion) if use_resffn else TokenMLP(dim, expansion)

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        if grid.dim() != 4:
            raise ValueError(f"expected a (batch, H, W, dim) grid, got shape {tuple(grid.shape)}")
        parts = window_partition(self.norm1(grid), self.window)
        attended = self.attn(parts.windows)
        grid = grid + window_merge(replace(parts, windows=attended))
        b, h, w, dim = grid.shape
        seq = grid.reshape(b, h * w, dim)
        seq = seq + self.ffn(self.norm2(seq))
        return seq.reshape(b, h, w, dim)


class SpatialTransformerLayer(nn.Module):
    """Transformer layer over spatial tokens of a feature map.

    Tokens are the HxW positions, embedded by channel, attended within
    MxM spatial windows.
    """

    def __init__(self, channels: int, window: int, num_heads: int = 4, use_resffn: bool = True, expansion: int = 2):
        super().__init__()
        self.inner = TransformerLayer(channels, window, num_heads, use_resffn, expansion)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:  # (batch, C, H, W)
        grid = feature.permute(0, 2, 3, 1)
        return self.inner(grid).permute(0, 3, 1, 2)


class ChannelTransformerLayer(nn.Module):
    """Transformer layer over channel tokens of a feature map.

    Tokens are the C channels, each embedded by the flattened HxW extent,
    attended within windows of ``window²`` consecutive channels.
    """

    def __init__(
        self,
        channels: int,
        spatial_tokens: int,
        window: int,
        num_heads: int = 4,
        use_resffn: bool = True,
        expansion: int = 2,
    ):
        super().__init__()
        group = window * window
        if channels % group:
            raise ValueError(f"channel count {channels} is not divisible by window tokens {group}")
        self.rows = channels // group
        self.group = group
        self.spatial_tokens = spatial_tokens
        self.inner = TransformerLayer(
            spatial_tokens, (1, group), num_heads, use_resffn, expansion, bias_1d=True
        )

    def forward(self, feature: torch.Tensor) -> torch.Tensor:  # (batch, C, H, W)
        b, c, h, w = feature.shape
        if h * w != self.spatial_tokens:
            raise ValueError(f"feature extent {h}x{w} does not match embed dim {self.spatial_tokens}")
        # rows of `group` consecutive channels form the partition windows
        grid = feature.reshape(b, self.rows, self.group, h * w)
        return self.inner(grid).reshape(b, c, h, w)
