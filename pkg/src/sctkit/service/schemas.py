"""Request/response models for the enhancement service.

All models reject unknown keys so a misspelled config field is reported by
name instead of being ignored.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(StrictModel):
    status: str
    version: str


class AblationResponse(StrictModel):
    name: str
    config: dict


class AblationListResponse(StrictModel):
    variants: list[str]


class EnhanceRequest(StrictModel):
    image_png_base64: str = Field(description="Base64-encoded 8-bit RGB PNG")
    checkpoint: str = Field(description="Server-side path of a model checkpoint")


class EnhanceResponse(StrictModel):
    image_png_base64: str
    width: int
    height: int


class SynthRequest(StrictModel):
    count: int = Field(default=8, ge=1)
    size: int = Field(default=64, ge=8)
    seed: int = 0
    output_dir: str


class SynthResponse(StrictModel):
    root: str
    low_dir: str
    normal_dir: str
    count: int


class ModelSpec(StrictModel):
    variant: str = Field(default="full", description="Ablation variant name")
    tiny: bool = Field(default=False, description="Desk-scale preset (stages=2, stem=8, window=2, iterations=4, estimation=32)")
    seed: int = 0
    config: dict | None = Field(default=None, description="Full architecture config, overriding variant/tiny")


class TrainSettings(StrictModel):
    learning_rate: float = 8e-4
    weight_decay: float = 0.02
    warmup_epochs: int = 5
    total_epochs: int = 100
    batch_size: int = 32
    crop: int = 256
    seed: int = 0
    max_steps: int | None = None
    horizontal_flip: bool = True
    grad_clip: float | None = 5.0


class SyntheticSpec(StrictModel):
    count: int = Field(default=8, ge=1)
    size: int = Field(default=64, ge=8)


class TrainRequest(StrictModel):
    output_dir: str
    dataset_root: str | None = None
    synthetic: SyntheticSpec | None = None
    model: ModelSpec = ModelSpec()
    backbone_checkpoint: str | None = None
    backbone_seed: int = 0
    settings: TrainSettings = TrainSettings()


class TrainResponse(StrictModel):
    checkpoint: str
    best_checkpoint: str
    history_csv: str
    steps: int
    initial_smoothed_loss: float
    final_smoothed_loss: float
    final_loss: float
    settings: TrainSettings
    model_config_used: dict


class EvalRequest(StrictModel):
    predictions_dir: str
    ground_truth_dir: str
    report_path: str | None = None
    curves_path: str | None = None


class EvalResponse(StrictModel):
    report: dict
    clean: bool
    report_path: str | None
    curves_path: str | None


class DefaultsResponse(StrictModel):
    train: TrainSettings
    model: dict
    tiny_model: dict
