"""Shared fixtures and independent numeric oracles used across the suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from sctkit.network import SctConfig

# micro config: fastest valid architecture, used where any valid net will do
MICRO_CONFIG = SctConfig(stages=1, stem_channels=4, window=2, iterations=2, estimation_size=8)


@pytest.fixture(autouse=True)
def _single_threaded_torch():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def plain_projection_oracle(x: np.ndarray, illum: np.ndarray, iterations: int) -> np.ndarray:
    """Independently coded iterated curve projection (no noise term)."""
    out = x.copy()
    for _ in range(iterations):
        out = out + illum * out * (1.0 - out)
    return out


def naive_conv2d(image: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Direct nested-loop 2D convolution, 3x3 kernel, padding 1, stride 1.

    ``image`` is (C_in, H, W); ``weight`` is (C_out, C_in, 3, 3).  Serves as
    the independent oracle for conv layers.
    """
    c_out, c_in, kh, kw = weight.shape
    _, h, w = image.shape
    padded = np.zeros((c_in, h + 2, w + 2), dtype=image.dtype)
    padded[:, 1:-1, 1:-1] = image
    out = np.zeros((c_out, h, w), dtype=image.dtype)
    for co in range(c_out):
        for i in range(h):
            for j in range(w):
                acc = bias[co]
                for ci in range(c_in):
                    for di in range(kh):
                        for dj in range(kw):
                            acc += weight[co, ci, di, dj] * padded[ci, i + di, j + dj]
                out[co, i, j] = acc
    return out


def naive_depthwise_conv2d(image: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Direct nested-loop depthwise 3x3 convolution, padding 1, stride 1.

    ``weight`` is (C, 1, 3, 3): one kernel per channel.
    """
    c, h, w = image.shape
    padded = np.zeros((c, h + 2, w + 2), dtype=image.dtype)
    padded[:, 1:-1, 1:-1] = image
    out = np.zeros_like(image)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                acc = bias[ch]
                for di in range(3):
                    for dj in range(3):
                        acc += weight[ch, 0, di, dj] * padded[ch, i + di, j + dj]
                out[ch, i, j] = acc
    return out


def central_difference_grads(loss_fn, tensors, coords_per_tensor=None, eps=1e-5, seed=0):
    """Central finite differences of ``loss_fn()`` w.r.t. selected coordinates.

    Perturbs the given tensors in place (restoring them afterwards).  When
    ``coords_per_tensor`` is None every coordinate is checked; otherwise a
    deterministic sample of that many coordinates per tensor.  Returns
    ``[(tensor_index, flat_coord, fd_grad), ...]``.
    """
    rng = np.random.default_rng(seed)
    results = []
    with torch.no_grad():
        for t_index, tensor in enumerate(tensors):
            flat = tensor.reshape(-1)
            n = flat.numel()
            if coords_per_tensor is None or coords_per_tensor >= n:
                coords = range(n)
            else:
                coords = sorted(rng.choice(n, size=coords_per_tensor, replace=False).tolist())
            for c in coords:
                original = flat[c].item()
                flat[c] = original + eps
                f_plus = float(loss_fn())
                flat[c] = original - eps
                f_minus = float(loss_fn())
                flat[c] = original
                results.append((t_index, c, (f_plus - f_minus) / (2.0 * eps)))
    return results


def max_relative_error(analytic, fd_entries, tensors, floor=1e-3):
    """Worst relative disagreement between analytic and FD gradients.

    The denominator is floored so coordinates where both gradients are
    essentially zero (hence dominated by FD roundoff) compare absolutely.
    """
    worst = 0.0
    for t_index, coord, fd in fd_entries:
        ad = float(analytic[t_index].reshape(-1)[coord])
        err = abs(ad - fd) / max(abs(ad), abs(fd), floor)
        worst = max(worst, err)
    return worst
