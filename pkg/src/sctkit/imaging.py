"""8-bit PNG I/O and conversions between images and float tensors."""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image


def to_float_tensor(array: np.ndarray) -> torch.Tensor:
    """HxWx3 uint8 array -> 3xHxW float32 tensor in [0, 1]."""
    if array.ndim != 3 or array.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 array, got shape {tuple(array.shape)}")
    return torch.from_numpy(array.astype(np.float32) / 255.0).permute(2, 0, 1).contiguous()


def to_uint8_array(image: torch.Tensor) -> np.ndarray:
    """3xHxW float tensor in [0, 1] -> HxWx3 uint8 array.

    Quantization rounds half to even (np.rint) before the cast.
    """
    if image.dim() != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a 3xHxW tensor, got shape {tuple(image.shape)}")
    scaled = image.detach().cpu().numpy().transpose(1, 2, 0) * 255.0
    return np.rint(scaled).clip(0, 255).astype(np.uint8)


def read_image(path) -> torch.Tensor:
    """Read an image file as a 3xHxW float tensor in [0, 1] (coerced to RGB)."""
    with Image.open(path) as img:
        return to_float_tensor(np.asarray(img.convert("RGB")))


def write_image(path, image: torch.Tensor) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8_array(image)).save(path, format="PNG")


def decode_png(data: bytes) -> torch.Tensor:
    with Image.open(io.BytesIO(data)) as img:
        return to_float_tensor(np.asarray(img.convert("RGB")))


def encode_png(image: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8_array(image)).save(buf, format="PNG")
    return buf.getvalue()


def tensor_to_b64(image: torch.Tensor) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def b64_to_tensor(payload: str) -> torch.Tensor:
    return decode_png(base64.b64decode(payload))
