import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sctkit.tracking_eval import (
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    BoundingBox,
    TrajectoryPair,
    cle,
    evaluate_directories,
    iou,
    precision_curve,
    read_trajectory,
    success_auc,
    write_curves_csv,
    write_report_json,
    write_trajectory,
)

finite_coord = st.floats(min_value=-500, max_value=500, allow_nan=False)
positive_len = st.floats(min_value=0.1, max_value=200, allow_nan=False)


def random_boxes(rng, n):
    return [
        BoundingBox(
            x=float(rng.uniform(-50, 50)),
            y=float(rng.uniform(-50, 50)),
            w=float(rng.uniform(0.5, 40)),
            h=float(rng.uniform(0.5, 40)),
        )
        for _ in range(n)
    ]


class TestBoxMetrics:
    def test_cle_identical_is_zero(self):
        a = BoundingBox(3, 4, 10, 12)
        assert cle(a, a) == 0.0

    def test_cle_three_four_five(self):
        a = BoundingBox(-1, -1, 2, 2)  # center (0, 0)
        b = BoundingBox(2, 3, 2, 2)  # center (3, 4)
        assert cle(a, b) == 5.0

    def test_iou_identical_is_one(self):
        a = BoundingBox(1, 2, 5, 6)
        assert iou(a, a) == 1.0

    def test_iou_disjoint_is_zero(self):
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(10, 10, 2, 2)) == 0.0

    def test_iou_one_seventh(self):
        # intersection 1, union 4 + 4 - 1 = 7
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == 1.0 / 7.0

    def test_iou_zero_union_convention(self):
        a = BoundingBox(0, 0, 0, 0)
        assert iou(a, a) == 0.0

    def test_negative_extent_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            BoundingBox(0, 0, -1, 2)

    @given(x1=finite_coord, y1=finite_coord, w1=positive_len, h1=positive_len,
           x2=finite_coord, y2=finite_coord, w2=positive_len, h2=positive_len)
    def test_iou_symmetric_and_bounded(self, x1, y1, w1, h1, x2, y2, w2, h2):
        a, b = BoundingBox(x1, y1, w1, h1), BoundingBox(x2, y2, w2, h2)
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)
        assert cle(a, b) == cle(b, a)

    @given(x=finite_coord, y=finite_coord, w=positive_len, h=positive_len,
           dx=finite_coord, dy=finite_coord)
    def test_translation_invariance(self, x, y, w, h, dx, dy):
        a = BoundingBox(x, y, w, h)
        b = BoundingBox(x + 3, y - 2, w, h)
        at = BoundingBox(a.x + dx, a.y + dy, w, h)
        bt = BoundingBox(b.x + dx, b.y + dy, w, h)
        assert iou(a, b) == pytest.approx(iou(at, bt), rel=1e-9, abs=1e-12)
        assert cle(a, b) == pytest.approx(cle(at, bt), rel=1e-9, abs=1e-9)


class TestCurves:
    def test_perfect_predictions(self):
        boxes = [BoundingBox(i, i, 5, 5) for i in range(4)]
        pair = TrajectoryPair("seq", boxes, list(boxes))
        p = precision_curve(pair)
        assert all(v == 1.0 for v in p.values)
        assert p.score == 1.0
        s = success_auc(pair)
        assert s.values[:-1] == [1.0] * 20 and s.values[-1] == 0.0  # IoU 1 is not > 1.0
        assert s.score == pytest.approx(20.0 / 21.0)

    def test_offset_step_function(self):
        truth = [BoundingBox(0, 0, 4, 4)] * 3
        predicted = [BoundingBox(25, 0, 4, 4)] * 3  # CLE exactly 25 px
        p = precision_curve(TrajectoryPair("seq", predicted, truth))
        by_thr = dict(zip(p.thresholds, p.values))
        assert by_thr[20.0] == 0.0
        assert by_thr[24.0] == 0.0
        assert by_thr[25.0] == 1.0  # inclusive threshold
        assert by_thr[26.0] == 1.0

    def test_half_of_frames_within_threshold(self):
        truth = [BoundingBox(0, 0, 4, 4), BoundingBox(0, 0, 4, 4)]
        predicted = [BoundingBox(0, 0, 4, 4), BoundingBox(40, 0, 4, 4)]
        p = precision_curve(TrajectoryPair("seq", predicted, truth))
        assert p.score == 0.5

    def test_zero_overlap_auc(self):
        truth = [BoundingBox(0, 0, 4, 4)] * 2
        predicted = [BoundingBox(100, 100, 4, 4)] * 2
        assert success_auc(TrajectoryPair("seq", predicted, truth)).score == 0.0

    def test_single_frame_iou_half_step(self):
        truth = [BoundingBox(0, 0, 4, 4)]
        predicted = [BoundingBox(0, 0, 4, 2)]  # IoU exactly 0.5
        s = success_auc(TrajectoryPair("seq", predicted, truth))
        for thr, val in zip(s.thresholds, s.values):
            assert val == (1.0 if 0.5 > thr else 0.0)

    def test_monotonicity(self, rng):
        pair = TrajectoryPair("seq", random_boxes(rng, 40), random_boxes(rng, 40))
        p, s = precision_curve(pair), success_auc(pair)
        assert all(b >= a for a, b in zip(p.values, p.values[1:]))
        assert all(b <= a for a, b in zip(s.values, s.values[1:]))

    def test_auc_matches_brute_force_oracle(self, rng):
        for _ in range(5):
            pair = TrajectoryPair("seq", random_boxes(rng, 50), random_boxes(rng, 50))
            result = success_auc(pair)
            # independent per-frame, per-threshold double loop
            total = 0.0
            for thr in SUCCESS_THRESHOLDS:
                hits = 0
                for p, t in zip(pair.predicted, pair.truth):
                    if iou(p, t) > thr:
                        hits += 1
                total += hits / len(pair.truth)
            assert abs(result.score - total / len(SUCCESS_THRESHOLDS)) < 1e-12

    def test_degenerate_truth_frames_excluded_and_counted(self):
        truth = [BoundingBox(0, 0, 4, 4), BoundingBox(0, 0, 0, 4), BoundingBox(0, 0, 4, 4)]
        predicted = [BoundingBox(0, 0, 4, 4)] * 3
        p = precision_curve(TrajectoryPair("seq", predicted, truth))
        assert p.frames_evaluated == 2
        assert p.frames_excluded == 1
        assert p.score == 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="frames"):
            TrajectoryPair("seq", [BoundingBox(0, 0, 1, 1)], [])

    def test_threshold_grids(self):
        assert len(PRECISION_THRESHOLDS) == 51
        assert PRECISION_THRESHOLDS[0] == 0.0 and PRECISION_THRESHOLDS[-1] == 50.0
        assert len(SUCCESS_THRESHOLDS) == 21
        assert SUCCESS_THRESHOLDS[0] == 0.0 and SUCCESS_THRESHOLDS[-1] == pytest.approx(1.0)


class TestFilesAndReports:
    def test_trajectory_roundtrip(self, tmp_path, rng):
        boxes = random_boxes(rng, 10)
        path = tmp_path / "seq1.txt"
        write_trajectory(path, boxes)
        loaded = read_trajectory(path)
        assert len(loaded) == 10
        for a, b in zip(boxes, loaded):
            assert a.x == pytest.approx(b.x, rel=1e-5)

    def test_malformed_line_names_position(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1,2,3,4\n5,6,7\n")
        with pytest.raises(ValueError, match="bad.txt:2"):
            read_trajectory(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n")
        with pytest.raises(ValueError, match="no frames"):
            read_trajectory(path)

    def _make_dirs(self, tmp_path, rng, names, orphan_pred=None, orphan_gt=None):
        pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
        for name in names:
            boxes = random_boxes(rng, 12)
            write_trajectory(gt_dir / f"{name}.txt", boxes)
            write_trajectory(pred_dir / f"{name}.txt", random_boxes(rng, 12))
        if orphan_pred:
            write_trajectory(pred_dir / f"{orphan_pred}.txt", random_boxes(rng, 5))
        if orphan_gt:
            write_trajectory(gt_dir / f"{orphan_gt}.txt", random_boxes(rng, 5))
        return pred_dir, gt_dir

    def test_directory_evaluation(self, tmp_path, rng):
        pred_dir, gt_dir = self._make_dirs(tmp_path, rng, ["a", "b", "c"])
        outcome = evaluate_directories(pred_dir, gt_dir)
        assert outcome.clean
        assert set(outcome.report["sequences"]) == {"a", "b", "c"}
        agg = outcome.report["aggregate"]
        per_seq = outcome.report["sequences"].values()
        assert agg["precision_at_20"] == pytest.approx(np.mean([v["precision_at_20"] for v in per_seq]))
        assert agg["auc"] == pytest.approx(np.mean([v["auc"] for v in per_seq]))

    def test_orphans_listed_and_excluded(self, tmp_path, rng):
        pred_dir, gt_dir = self._make_dirs(tmp_path, rng, ["a", "b"], orphan_pred="stray")
        outcome = evaluate_directories(pred_dir, gt_dir)
        assert not outcome.clean
        assert outcome.orphans_predicted == ["stray"]
        assert set(outcome.report["sequences"]) == {"a", "b"}

    def test_empty_directory_rejected(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        with pytest.raises(ValueError, match="no sequence files"):
            evaluate_directories(tmp_path / "pred", tmp_path / "gt")

    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            evaluate_directories(tmp_path / "pred", tmp_path / "gt")

    def test_report_and_curves_written(self, tmp_path, rng):
        pred_dir, gt_dir = self._make_dirs(tmp_path, rng, ["a", "b"])
        outcome = evaluate_directories(pred_dir, gt_dir)
        report_path, curves_path = tmp_path / "report.json", tmp_path / "curves.csv"
        write_report_json(report_path, outcome)
        write_curves_csv(curves_path, outcome)
        loaded = json.loads(report_path.read_text())
        assert loaded["aggregate"]["sequences"] == 2
        lines = curves_path.read_text().splitlines()
        assert lines[0] == "sequence,metric,threshold,value"
        # precision and success curves for two sequences plus the aggregate rows
        assert len(lines) == 1 + 3 * (51 + 21)
