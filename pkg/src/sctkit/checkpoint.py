"""Single-file checkpoint archive for enhancer models and loss backbones.

A checkpoint is a NumPy ``.npz`` archive holding one array per parameter
plus a ``__meta__`` entry: JSON carrying the format version, the checkpoint
kind (``model`` or ``backbone``) and the serialized configuration.

Parameter keys are the canonical dotted module paths, which encode the
stage index and the layer role, e.g.::

    encoders.0.conv1.conv.weight      first encoder, first 3x3 conv
    bottleneck.1.inner.attn.to_q.bias channel transformer, query projection
    decoders.2.fuse1.conv.weight      third-from-deepest decoder, first fuse conv
    head.weight                       curve-map output conv

Arrays are stored bit-exactly, so a save/load roundtrip reproduces the
model outputs to 0 ulps.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched, or wrong-kind checkpoint files."""


def save_checkpoint(path, module: torch.nn.Module, config: dict, kind: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": FORMAT_VERSION, "kind": kind, "config": config}
    arrays = {name: tensor.detach().cpu().numpy() for name, tensor in module.state_dict().items()}
    with open(path, "wb") as fh:  # write the handle so numpy cannot append an extension
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, expect_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            if "__meta__" not in archive:
                raise CheckpointError(f"{path} is not a checkpoint archive (missing __meta__)")
            meta = json.loads(str(archive["__meta__"]))
            arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r} in {path}")
    if expect_kind is not None and meta.get("kind") != expect_kind:
        raise CheckpointError(f"{path} holds a {meta.get('kind')!r} checkpoint, expected {expect_kind!r}")
    return meta, arrays


def _load_state(module: torch.nn.Module, arrays: dict[str, np.ndarray], path) -> None:
    state = {name: torch.from_numpy(np.array(array)) for name, array in arrays.items()}
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"parameters in {path} do not match the configured module: {exc}") from exc


def save_model(path, model) -> None:
    save_checkpoint(path, model, model.config.to_dict(), kind="model")


def load_model(path):
    from .network import SctConfig, SctNet

    meta, arrays = load_checkpoint(path, expect_kind="model")
    model = SctNet(SctConfig.from_dict(meta["config"]))
    _load_state(model, arrays, path)
    model.eval()
    return model


def save_backbone(path, backbone) -> None:
    save_checkpoint(path, backbone, backbone.config_dict(), kind="backbone")


def load_backbone(path):
    from .task_loss import FrozenBackbone

    meta, arrays = load_checkpoint(path, expect_kind="backbone")
    backbone = FrozenBackbone()
    _load_state(backbone, arrays, path)
    return backbone
