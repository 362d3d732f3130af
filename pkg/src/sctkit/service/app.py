"""FastAPI service wrapping the enhancement toolkit.

The service keeps recently used model checkpoints resident (one load per
checkpoint, shared by all requests), so long-running clients such as
tracking pipelines pay the model load once.  Bulk data (datasets, output
directories, checkpoints) is addressed by server-side paths; images travel
inline as base64 PNG.
"""

from __future__ import annotations

import binascii
import os
from collections import OrderedDict
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..checkpoint import CheckpointError, load_backbone, load_model
from ..data import DatasetError, load_pairs, synth_pairs, write_pairs
from ..imaging import b64_to_tensor, tensor_to_b64
from ..network import ABLATION_VARIANTS, TINY_CONFIG, ConfigError, SctConfig, ablation_variant, build_model
from ..task_loss import build_backbone
from ..training import TrainConfig, TrainingError, train
from ..tracking_eval import evaluate_directories, write_curves_csv, write_report_json
from .schemas import (
    AblationListResponse,
    AblationResponse,
    DefaultsResponse,
    EnhanceRequest,
    EnhanceResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
    TrainSettings,
)


class ModelCache:
    """Keeps the most recently used checkpoints loaded, keyed by path + mtime."""

    def __init__(self, capacity: int = 4):
        self.capacity = capacity
        self._entries: OrderedDict[str, tuple[float, object]] = OrderedDict()

    def get(self, checkpoint: str):
        path = Path(checkpoint)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"checkpoint not found: {checkpoint}")
        key = str(path.resolve())
        mtime = os.path.getmtime(path)
        cached = self._entries.get(key)
        if cached is not None and cached[0] == mtime:
            self._entries.move_to_end(key)
            return cached[1]
        try:
            model = load_model(path)
        except CheckpointError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        self._entries[key] = (mtime, model)
        self._entries.move_to_end(key)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
        return model


def _resolve_model_config(spec) -> SctConfig:
    if spec.config is not None:
        return SctConfig.from_dict(spec.config)
    if spec.tiny:
        return TINY_CONFIG
    return ablation_variant(spec.variant)


def create_app() -> FastAPI:
    app = FastAPI(title="sctkit", version=__version__)
    app.state.models = ModelCache()

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/defaults", response_model=DefaultsResponse)
    def defaults():
        return DefaultsResponse(
            train=TrainSettings(),
            model=SctConfig().to_dict(),
            tiny_model=TINY_CONFIG.to_dict(),
        )

    @app.get("/ablation", response_model=AblationListResponse)
    def ablation_list():
        return AblationListResponse(variants=list(ABLATION_VARIANTS))

    @app.get("/ablation/{name}", response_model=AblationResponse)
    def ablation(name: str):
        try:
            config = ablation_variant(name)
        except ValueError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return AblationResponse(name=name, config=config.to_dict())

    @app.post("/enhance", response_model=EnhanceResponse)
    def enhance(request: EnhanceRequest):
        model = app.state.models.get(request.checkpoint)
        try:
            image = b64_to_tensor(request.image_png_base64)
        except (binascii.Error, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=f"cannot decode image: {exc}") from exc
        try:
            enhanced = model.enhance(image)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        _, h, w = enhanced.shape
        return EnhanceResponse(image_png_base64=tensor_to_b64(enhanced), width=w, height=h)

    @app.post("/synth", response_model=SynthResponse)
    def synth(request: SynthRequest):
        samples = synth_pairs(request.count, request.size, request.seed)
        root = Path(request.output_dir)
        write_pairs(samples, root)
        return SynthResponse(
            root=str(root),
            low_dir=str(root / "low"),
            normal_dir=str(root / "normal"),
            count=len(samples),
        )

    @app.post("/train", response_model=TrainResponse)
    def run_training(request: TrainRequest):
        settings = request.settings
        if request.synthetic is not None:
            pairs = synth_pairs(request.synthetic.count, request.synthetic.size, settings.seed)
            # synthetic images are generated at exactly the requested size
            settings = settings.model_copy(update={"crop": min(settings.crop, request.synthetic.size)})
        elif request.dataset_root is not None:
            try:
                pairs = load_pairs(request.dataset_root)
            except DatasetError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        else:
            raise HTTPException(status_code=400, detail="provide dataset_root or synthetic")

        try:
            model_config = _resolve_model_config(request.model)
            model = build_model(model_config, request.model.seed)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if request.backbone_checkpoint is not None:
            try:
                backbone = load_backbone(request.backbone_checkpoint)
            except CheckpointError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        else:
            backbone = build_backbone(request.backbone_seed)

        config = TrainConfig(dataset_root=request.dataset_root, **settings.model_dump())
        try:
            result = train(model, backbone, pairs, config, request.output_dir)
        except (DatasetError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except TrainingError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return TrainResponse(
            checkpoint=str(result.checkpoint_path),
            best_checkpoint=str(result.best_checkpoint_path),
            history_csv=str(result.csv_path),
            steps=result.steps,
            initial_smoothed_loss=result.initial_smoothed,
            final_smoothed_loss=result.final_smoothed,
            final_loss=result.history[-1].loss_total,
            settings=settings,
            model_config_used=model_config.to_dict(),
        )

    @app.post("/eval", response_model=EvalResponse)
    def run_eval(request: EvalRequest):
        try:
            outcome = evaluate_directories(request.predictions_dir, request.ground_truth_dir)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if request.report_path:
            write_report_json(request.report_path, outcome)
        if request.curves_path:
            write_curves_csv(request.curves_path, outcome)
        return EvalResponse(
            report=outcome.report,
            clean=outcome.clean,
            report_path=request.report_path,
            curves_path=request.curves_path,
        )

    return app
