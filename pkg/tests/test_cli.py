import json

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from sctkit.checkpoint import save_model
from sctkit.cli import main
from sctkit.imaging import write_image
from sctkit.network import TINY_CONFIG, build_model
from sctkit.tracking_eval import BoundingBox, write_trajectory


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def identity_checkpoint(tmp_path_factory):
    model = build_model(TINY_CONFIG, seed=0)
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.zero_()
    path = tmp_path_factory.mktemp("ckpt") / "identity.npz"
    save_model(path, model)
    return path


@pytest.fixture
def image_dir(tmp_path, rng):
    d = tmp_path / "in"
    for i in range(5):
        write_image(d / f"img{i}.png", torch.from_numpy(rng.uniform(0, 1, size=(3, 20, 24)).astype(np.float32)))
    return d


class TestEnhance:
    def test_directory_of_five(self, runner, identity_checkpoint, image_dir, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["enhance", str(image_dir), "-c", str(identity_checkpoint), "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in out.iterdir()) == [f"img{i}.png" for i in range(5)]

    def test_identity_checkpoint_preserves_pixels(self, runner, identity_checkpoint, image_dir, tmp_path):
        out = tmp_path / "out"
        runner.invoke(main, ["enhance", str(image_dir), "-c", str(identity_checkpoint), "-o", str(out)])
        for name in ("img0.png", "img3.png"):
            assert (image_dir / name).read_bytes() == (out / name).read_bytes()

    def test_reruns_are_byte_identical(self, runner, identity_checkpoint, image_dir, tmp_path):
        outputs = []
        for run in range(2):
            out = tmp_path / f"out{run}"
            result = runner.invoke(main, ["enhance", str(image_dir), "-c", str(identity_checkpoint), "-o", str(out)])
            assert result.exit_code == 0
            outputs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outputs[0] == outputs[1]

    def test_unreadable_image_skipped_with_warning(self, runner, identity_checkpoint, image_dir, tmp_path):
        (image_dir / "broken.png").write_bytes(b"this is not a png")
        out = tmp_path / "out"
        result = runner.invoke(main, ["enhance", str(image_dir), "-c", str(identity_checkpoint), "-o", str(out)])
        assert result.exit_code == 1
        assert "skipping broken.png" in result.output
        assert len(list(out.iterdir())) == 5

    def test_missing_checkpoint_fatal(self, runner, image_dir, tmp_path):
        result = runner.invoke(main, ["enhance", str(image_dir), "-c", "missing.npz", "-o", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "checkpoint not found" in result.output


class TestTrain:
    def test_synthetic_tiny_run(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            ["train", "--synthetic", "--pairs", "4", "--size", "32", "--steps", "4",
             "--tiny", "--seed", "3", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "model_last.npz").is_file()
        assert (out / "history.csv").is_file()
        assert "final loss" in result.output

    def test_effective_config_echoed(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["train", "--synthetic", "--pairs", "2", "--size", "32", "--steps", "1",
             "--tiny", "-o", str(tmp_path / "run")],
        )
        assert result.exit_code == 0, result.output
        echoed = json.loads(result.output[: result.output.index("\ntrained") + 1])
        settings = echoed["settings"]
        assert settings["learning_rate"] == 8e-4
        assert settings["weight_decay"] == 0.02
        assert settings["total_epochs"] == 100
        assert settings["warmup_epochs"] == 5

    def test_default_recipe_without_tiny(self, runner, tmp_path):
        # without --tiny the echoed defaults keep the full recipe values
        result = runner.invoke(
            main,
            ["train", "--synthetic", "--pairs", "2", "--size", "32", "--steps", "1",
             "--variant", "none", "-o", str(tmp_path / "run")],
        )
        assert result.exit_code == 0, result.output
        echoed = json.loads(result.output[: result.output.index("\ntrained") + 1])
        assert echoed["settings"]["batch_size"] == 32
        assert echoed["settings"]["crop"] == 256

    def test_missing_dataset_fatal(self, runner, tmp_path):
        result = runner.invoke(main, ["train", "-o", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert "no dataset root" in result.output

    def test_malformed_config_names_key(self, runner, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"settings": {"learning_rte": 1e-3}}))
        result = runner.invoke(
            main,
            ["train", "--config", str(config), "--synthetic", "--steps", "1", "--tiny",
             "-o", str(tmp_path / "run")],
        )
        assert result.exit_code == 2
        assert "learning_rte" in result.output

    def test_config_file_with_flag_overrides(self, runner, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "synthetic": {"count": 2, "size": 32},
            "model": {"tiny": True},
            "settings": {"max_steps": 2, "seed": 9},
        }))
        result = runner.invoke(main, ["train", "--config", str(config), "--steps", "1", "-o", str(tmp_path / "run")])
        assert result.exit_code == 0, result.output
        assert "trained 1 step(s)" in result.output


class TestEval:
    def _write_sequences(self, base, names, frames=6):
        pred, gt = base / "pred", base / "gt"
        for name in names:
            boxes = [BoundingBox(float(i), 2.0 * i, 8.0, 6.0) for i in range(frames)]
            write_trajectory(gt / f"{name}.txt", boxes)
            write_trajectory(pred / f"{name}.txt", boxes)
        return pred, gt

    def test_perfect_predictions(self, runner, tmp_path):
        pred, gt = self._write_sequences(tmp_path, ["a", "b"])
        report = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", "--pred", str(pred), "--gt", str(gt), "--report", str(report)])
        assert result.exit_code == 0, result.output
        data = json.loads(report.read_text())
        assert data["aggregate"]["precision_at_20"] == 1.0
        assert data["aggregate"]["auc"] == pytest.approx(20.0 / 21.0)

    def test_orphan_flagged_and_excluded(self, runner, tmp_path):
        pred, gt = self._write_sequences(tmp_path, ["a", "b", "c"])
        (pred / "c.txt").unlink()  # c exists only in ground truth
        report = tmp_path / "report.json"
        result = runner.invoke(main, ["eval", "--pred", str(pred), "--gt", str(gt), "--report", str(report)])
        assert result.exit_code == 1
        assert "c" in result.output
        data = json.loads(report.read_text())
        assert set(data["sequences"]) == {"a", "b"}
        assert data["orphans"]["ground_truth_only"] == ["c"]

    def test_empty_directories_fatal(self, runner, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        result = runner.invoke(main, ["eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
                                      "--report", str(tmp_path / "r.json")])
        assert result.exit_code == 2

    def test_curves_csv_written(self, runner, tmp_path):
        pred, gt = self._write_sequences(tmp_path, ["a"])
        curves = tmp_path / "curves.csv"
        result = runner.invoke(main, ["eval", "--pred", str(pred), "--gt", str(gt),
                                      "--report", str(tmp_path / "r.json"), "--curves", str(curves)])
        assert result.exit_code == 0
        assert curves.read_text().startswith("sequence,metric,threshold,value")


class TestAblationAndSynth:
    def test_ablation_prints_config(self, runner):
        result = runner.invoke(main, ["ablation", "full"])
        assert result.exit_code == 0
        config = json.loads(result.output)
        assert config["spatial_attention"] and config["channel_attention"]
        assert config["resffn"] and config["denoise"]

    def test_no_denoise_variant(self, runner):
        result = runner.invoke(main, ["ablation", "no_denoise"])
        assert json.loads(result.output)["denoise"] is False

    def test_none_variant_marks_disabled(self, runner):
        result = runner.invoke(main, ["ablation", "none"])
        assert json.loads(result.output)["enabled"] is False

    def test_unknown_variant_lists_choices(self, runner):
        result = runner.invoke(main, ["ablation", "wild"])
        assert result.exit_code == 2
        assert "valid choices" in result.output

    def test_synth_deterministic(self, runner, tmp_path):
        outputs = []
        for run in range(2):
            out = tmp_path / f"ds{run}"
            result = runner.invoke(main, ["synth", "--count", "2", "--size", "16", "--seed", "4", "-o", str(out)])
            assert result.exit_code == 0
            outputs.append({p.name: p.read_bytes() for p in sorted((out / "low").iterdir())})
        assert outputs[0] == outputs[1]
