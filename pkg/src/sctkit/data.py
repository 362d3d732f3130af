"""Paired low/normal-light data: directory loading, synthetic pairs, and
synchronized augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .imaging import read_image, write_image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class DatasetError(ValueError):
    """Raised for missing, empty, or mismatched dataset directories."""


@dataclass(frozen=True)
class PairPaths:
    """On-disk reference to one low/normal pair (lazy loading)."""

    name: str
    low: Path
    normal: Path


@dataclass
class PairedSample:
    """A low-light image and its normal-light counterpart, both 3xHxW in [0, 1]."""

    low: torch.Tensor
    normal: torch.Tensor

    def __post_init__(self):
        if self.low.shape != self.normal.shape:
            raise DatasetError(
                f"paired images must share a shape, got {tuple(self.low.shape)} vs {tuple(self.normal.shape)}"
            )


def _list_images(directory: Path) -> dict[str, Path]:
    return {p.name: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def load_pairs(root) -> list[PairPaths]:
    """Filename-matched pairs from ``root/low`` and ``root/normal``.

    Pairing is deterministic (lexicographic by filename); an unmatched file
    on either side is an error naming the orphan.
    """
    root = Path(root)
    low_dir, normal_dir = root / "low", root / "normal"
    for d in (low_dir, normal_dir):
        if not d.is_dir():
            raise DatasetError(f"dataset directory not found: {d}")
    lows, normals = _list_images(low_dir), _list_images(normal_dir)
    orphans = sorted(set(lows) ^ set(normals))
    if orphans:
        raise DatasetError(f"unmatched dataset files (present on one side only): {', '.join(orphans)}")
    if not lows:
        raise DatasetError(f"no images found under {root} (expected low/ and normal/ files)")
    return [PairPaths(name=n, low=lows[n], normal=normals[n]) for n in sorted(lows)]


def load_sample(pair: PairPaths) -> PairedSample:
    return PairedSample(low=read_image(pair.low), normal=read_image(pair.normal))


def synth_pairs(count: int, size: int, seed: int = 0) -> list[PairedSample]:
    """Deterministic desk-scale stand-in for a paired low/normal dataset.

    Normal images are random smooth color fields; low images are derived by
    gamma darkening (gamma in [2, 4]) plus additive Gaussian noise (sigma in
    [0.02, 0.06]), clamped to [0, 1].  Every generated low image is darker
    on average than its normal counterpart.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        base = rng.uniform(0.0, 1.0, size=(1, 3, 4, 4)).astype(np.float32)
        field = F.interpolate(torch.from_numpy(base), size=(size, size), mode="bilinear", align_corners=False)
        normal = 0.2 + 0.75 * field.squeeze(0)  # smooth field in [0.2, 0.95]
        gamma = rng.uniform(2.0, 4.0)
        sigma = rng.uniform(0.02, 0.06)
        noise = torch.from_numpy(rng.normal(0.0, sigma, size=normal.shape).astype(np.float32))
        low = torch.clamp(normal**gamma + noise, 0.0, 1.0)
        samples.append(PairedSample(low=low, normal=normal))
    return samples


def write_pairs(samples: list[PairedSample], root) -> list[PairPaths]:
    """Write samples as an on-disk dataset (``root/low``, ``root/normal``, 8-bit PNG)."""
    root = Path(root)
    records = []
    for i, sample in enumerate(samples):
        name = f"{i:04d}.png"
        low_path, normal_path = root / "low" / name, root / "normal" / name
        write_image(low_path, sample.low)
        write_image(normal_path, sample.normal)
        records.append(PairPaths(name=name, low=low_path, normal=normal_path))
    return records


def paired_crop(sample: PairedSample, size: int, rng: np.random.Generator) -> PairedSample:
    """Random crop with the same window applied to both images."""
    _, h, w = sample.low.shape
    if size > min(h, w):
        raise DatasetError(f"crop {size} exceeds image size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return PairedSample(
        low=sample.low[:, top : top + size, left : left + size],
        normal=sample.normal[:, top : top + size, left : left + size],
    )


def paired_flip(sample: PairedSample, rng: np.random.Generator) -> PairedSample:
    """Horizontal flip applied to both images, or neither (p = 0.5)."""
    if rng.random() < 0.5:
        return PairedSample(low=sample.low.flip(-1), normal=sample.normal.flip(-1))
    return sample
