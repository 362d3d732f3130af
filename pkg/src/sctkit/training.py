"""Task-driven training loop.

AdamW with decoupled weight decay, per-step linear warmup followed by cosine
decay to zero, synchronized random crop / horizontal flip augmentation, and
per-step loss history written as CSV.  Batching and augmentation draw from a
single seeded generator, so a fixed seed reproduces the loss history bit for
bit on one device.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_model
from .data import DatasetError, PairPaths, PairedSample, load_sample, paired_crop, paired_flip
from .task_loss import TAP_LAYERS, perceptual_loss


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (e.g. a non-finite loss)."""


@dataclass
class TrainConfig:
    learning_rate: float = 8e-4
    weight_decay: float = 0.02
    warmup_epochs: int = 5
    total_epochs: int = 100
    batch_size: int = 32
    crop: int = 256
    seed: int = 0
    dataset_root: str | None = None
    max_steps: int | None = None  # optional cap; when set it also defines the schedule horizon
    horizontal_flip: bool = True
    grad_clip: float | None = 5.0

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.warmup_epochs < 0 or self.total_epochs < 1:
            raise ValueError("epoch counts must be positive")
        if self.warmup_epochs > self.total_epochs:
            raise ValueError(
                f"warmup_epochs {self.warmup_epochs} exceeds total_epochs {self.total_epochs}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.crop < 1:
            raise ValueError(f"crop must be >= 1, got {self.crop}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    step: int
    epoch: int
    lr: float
    loss_total: float
    loss_l3: float
    loss_l4: float
    loss_l5: float


@dataclass
class TrainResult:
    history: list[StepRecord]
    checkpoint_path: Path
    best_checkpoint_path: Path
    csv_path: Path
    steps: int = 0
    initial_smoothed: float = 0.0
    final_smoothed: float = 0.0
    extras: dict = field(default_factory=dict)


def lr_at_step(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Learning rate at a 0-indexed optimizer step.

    Linear warmup reaches ``base_lr`` exactly on the last warmup step (step 0
    uses ``base_lr / warmup_steps``); afterwards cosine decay brings it to
    zero at ``total_steps``.
    """
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return base_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    progress = min(max(progress, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def smoothed_bounds(history: list[StepRecord], window: int = 20) -> tuple[float, float]:
    """Mean loss over the first and last ``window`` steps of a history."""
    if not history:
        raise ValueError("empty history")
    window = min(window, len(history))
    losses = [r.loss_total for r in history]
    return float(np.mean(losses[:window])), float(np.mean(losses[-window:]))


def _materialize(item) -> PairedSample:
    return load_sample(item) if isinstance(item, PairPaths) else item


def write_history_csv(path, history: list[StepRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "lr", "loss_total", "loss_l3", "loss_l4", "loss_l5"])
        for r in history:
            writer.writerow([r.step, r.epoch, repr(r.lr), repr(r.loss_total), repr(r.loss_l3), repr(r.loss_l4), repr(r.loss_l5)])


def train(model, backbone, pairs, config: TrainConfig, out_dir) -> TrainResult:
    """Train ``model`` against ``backbone`` features on ``pairs``.

    ``pairs`` is a sequence of :class:`PairedSample` or on-disk
    :class:`PairPaths`.  Datasets smaller than one batch run with a reduced
    batch.  Checkpoints are written every epoch (``model_last.npz``) and at
    the best epoch-mean loss (``model_best.npz``); the per-step history goes
    to ``history.csv``.
    """
    config.validate()
    if not pairs:
        raise DatasetError("training requires at least one image pair")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    last_path = out_dir / "model_last.npz"
    best_path = out_dir / "model_best.npz"
    csv_path = out_dir / "history.csv"

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    n = len(pairs)
    batch_size = min(config.batch_size, n)
    steps_per_epoch = math.ceil(n / batch_size)
    if config.max_steps is not None:
        total_steps = config.max_steps
        epochs = math.ceil(total_steps / steps_per_epoch)
    else:
        epochs = config.total_epochs
        total_steps = epochs * steps_per_epoch
    warmup_steps = config.warmup_epochs * steps_per_epoch

    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ValueError("model has no trainable parameters (is enhancement disabled?)")
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate, weight_decay=config.weight_decay)

    history: list[StepRecord] = []
    best_epoch_loss = math.inf
    step = 0
    model.train()
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            if step >= total_steps:
                break
            lows, normals = [], []
            for idx in order[start : start + batch_size]:
                sample = _materialize(pairs[int(idx)])
                sample = paired_crop(sample, config.crop, rng)
                if config.horizontal_flip:
                    sample = paired_flip(sample, rng)
                lows.append(sample.low)
                normals.append(sample.normal)
            low_batch = torch.stack(lows)
            normal_batch = torch.stack(normals)

            lr = lr_at_step(step, total_steps, warmup_steps, config.learning_rate)
            for group in optimizer.param_groups:
                group["lr"] = lr

            optimizer.zero_grad()
            enhanced, _ = model(low_batch)
            report = perceptual_loss(backbone, enhanced, normal_batch)
            loss = report.total
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss.item()} at step {step} (epoch {epoch}); "
                    "inspect the data and learning rate"
                )
            loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()

            values = {layer: float(report.per_layer[layer].detach()) for layer in TAP_LAYERS}
            record = StepRecord(
                step=step,
                epoch=epoch,
                lr=lr,
                loss_total=float(loss.detach()),
                loss_l3=values[3],
                loss_l4=values[4],
                loss_l5=values[5],
            )
            history.append(record)
            epoch_losses.append(record.loss_total)
            step += 1

        save_model(last_path, model)
        if epoch_losses:
            epoch_mean = float(np.mean(epoch_losses))
            if epoch_mean < best_epoch_loss:
                best_epoch_loss = epoch_mean
                save_model(best_path, model)
        if step >= total_steps:
            break
    model.eval()

    write_history_csv(csv_path, history)
    initial, final = smoothed_bounds(history)
    return TrainResult(
        history=history,
        checkpoint_path=last_path,
        best_checkpoint_path=best_path,
        csv_path=csv_path,
        steps=step,
        initial_smoothed=initial,
        final_smoothed=final,
    )
