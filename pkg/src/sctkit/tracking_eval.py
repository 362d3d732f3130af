"""One-pass-evaluation tracking metrics.

Precision is the fraction of frames whose center location error (CLE) falls
at or under a pixel threshold, reported over a 0..50 px grid with the
headline score at 20 px.  Success is the fraction of frames whose IoU
exceeds an overlap threshold, reported over a 0..1 grid in 0.05 steps, and
ranked by the area under that curve (the arithmetic mean over the grid).
Frames whose ground-truth box is degenerate (zero width or height, e.g.
full occlusion) are excluded from both metrics and counted in the report.

Trajectory files hold one frame per line as ``x,y,w,h`` in ASCII decimal,
no header; the filename (minus extension) names the sequence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner plus width/height in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box width/height must be >= 0, got w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass
class TrajectoryPair:
    """Predicted and ground-truth box sequences of equal length."""

    name: str
    predicted: list[BoundingBox]
    truth: list[BoundingBox]

    def __post_init__(self):
        if len(self.predicted) != len(self.truth):
            raise ValueError(
                f"sequence {self.name!r}: predicted has {len(self.predicted)} frames "
                f"but ground truth has {len(self.truth)}"
            )
        if not self.truth:
            raise ValueError(f"sequence {self.name!r} is empty")


def cle(a: BoundingBox, b: BoundingBox) -> float:
    """Center location error: Euclidean distance between box centers."""
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 by convention when the union has no area."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


PRECISION_THRESHOLDS = tuple(float(t) for t in range(51))  # 0..50 px, step 1
SUCCESS_THRESHOLDS = tuple(i * 0.05 for i in range(21))  # 0..1, step 0.05
HEADLINE_PIXELS = 20.0


@dataclass
class MetricCurve:
    thresholds: tuple[float, ...]
    values: list[float]
    score: float  # precision at 20 px, or the AUC for success
    frames_evaluated: int
    frames_excluded: int


def _split_frames(pair: TrajectoryPair) -> tuple[list[tuple[BoundingBox, BoundingBox]], int]:
    kept = [(p, t) for p, t in zip(pair.predicted, pair.truth) if t.w > 0 and t.h > 0]
    return kept, len(pair.truth) - len(kept)


def precision_curve(pair: TrajectoryPair) -> MetricCurve:
    """Fraction of frames with CLE <= threshold, per threshold; score at 20 px."""
    frames, excluded = _split_frames(pair)
    errors = [cle(p, t) for p, t in frames]
    values = [
        (sum(1 for e in errors if e <= thr) / len(errors)) if errors else 0.0
        for thr in PRECISION_THRESHOLDS
    ]
    score = values[PRECISION_THRESHOLDS.index(HEADLINE_PIXELS)]
    return MetricCurve(PRECISION_THRESHOLDS, values, score, len(errors), excluded)


def success_auc(pair: TrajectoryPair) -> MetricCurve:
    """Fraction of frames with IoU > threshold, per threshold; AUC over the grid."""
    frames, excluded = _split_frames(pair)
    overlaps = [iou(p, t) for p, t in frames]
    values = [
        (sum(1 for o in overlaps if o > thr) / len(overlaps)) if overlaps else 0.0
        for thr in SUCCESS_THRESHOLDS
    ]
    auc = sum(values) / len(values)
    return MetricCurve(SUCCESS_THRESHOLDS, values, auc, len(overlaps), excluded)


def read_trajectory(path) -> list[BoundingBox]:
    """Parse one box per ``x,y,w,h`` line; malformed lines name their number."""
    boxes = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'x,y,w,h', got {line!r}")
        try:
            x, y, w, h = (float(p) for p in parts)
            boxes.append(BoundingBox(x, y, w, h))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not boxes:
        raise ValueError(f"{path}: no frames found")
    return boxes


def write_trajectory(path, boxes: list[BoundingBox]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{b.x:g},{b.y:g},{b.w:g},{b.h:g}" for b in boxes]
    path.write_text("\n".join(lines) + "\n")


@dataclass
class EvalOutcome:
    """Per-sequence and aggregate metrics plus the unmatched sequence names."""

    report: dict
    precision: dict[str, MetricCurve]
    success: dict[str, MetricCurve]
    orphans_predicted: list[str]
    orphans_truth: list[str]

    @property
    def clean(self) -> bool:
        return not (self.orphans_predicted or self.orphans_truth)


def _sequence_files(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.is_file()}


def evaluate_directories(pred_dir, gt_dir) -> EvalOutcome:
    """Evaluate every sequence present in both directories.

    Sequences present on only one side are listed as orphans and excluded.
    The aggregate scores are means of the per-sequence scores.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    preds, gts = _sequence_files(pred_dir), _sequence_files(gt_dir)
    shared = sorted(set(preds) & set(gts))
    if not preds or not gts:
        raise ValueError(f"no sequence files under {pred_dir if not preds else gt_dir}")
    if not shared:
        raise ValueError("prediction and ground-truth directories share no sequence names")

    precision: dict[str, MetricCurve] = {}
    success: dict[str, MetricCurve] = {}
    sequences = {}
    for name in shared:
        pair = TrajectoryPair(name, read_trajectory(preds[name]), read_trajectory(gts[name]))
        p, s = precision_curve(pair), success_auc(pair)
        precision[name], success[name] = p, s
        sequences[name] = {
            "precision_at_20": p.score,
            "auc": s.score,
            "frames": len(pair.truth),
            "frames_excluded": p.frames_excluded,
        }
    report = {
        "sequences": sequences,
        "aggregate": {
            "precision_at_20": sum(v["precision_at_20"] for v in sequences.values()) / len(sequences),
            "auc": sum(v["auc"] for v in sequences.values()) / len(sequences),
            "sequences": len(sequences),
            "frames": sum(v["frames"] for v in sequences.values()),
            "frames_excluded": sum(v["frames_excluded"] for v in sequences.values()),
        },
        "orphans": {
            "predictions_only": sorted(set(preds) - set(gts)),
            "ground_truth_only": sorted(set(gts) - set(preds)),
        },
    }
    return EvalOutcome(
        report=report,
        precision=precision,
        success=success,
        orphans_predicted=report["orphans"]["predictions_only"],
        orphans_truth=report["orphans"]["ground_truth_only"],
    )


def write_report_json(path, outcome: EvalOutcome) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(outcome.report, indent=2, sort_keys=True) + "\n")


def write_curves_csv(path, outcome: EvalOutcome) -> None:
    """Long-format curve data: sequence, metric, threshold, value."""
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(outcome.precision)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "metric", "threshold", "value"])
        for metric, curves in (("precision", outcome.precision), ("success", outcome.success)):
            per_threshold = []
            for name in names:
                curve = curves[name]
                for thr, val in zip(curve.thresholds, curve.values):
                    writer.writerow([name, metric, f"{thr:g}", repr(val)])
                per_threshold.append(curve.values)
            aggregate = [sum(col) / len(col) for col in zip(*per_threshold)]
            for thr, val in zip(curves[names[0]].thresholds, aggregate):
                writer.writerow(["aggregate", metric, f"{thr:g}", repr(val)])
