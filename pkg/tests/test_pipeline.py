import json
from pathlib import Path

import numpy as np
import pytest

from config.config import load_run_config
from dusss.app.data import decode_pgm, save_pgm
from dusss.errors import CheckpointError, ConfigError, ShapeError
from dusss.models import Split
from dusss.repository import checkpoint_repo_ins, dataset_repo_ins, metrics_repo_ins
from dusss.services import ablation_service, eval_service, inference_service, pretrain_service, semiseg_service


@pytest.fixture
def pretrained(tiny_overrides, tmp_path):
    """tiny config plus a freshly pretrained VLM checkpoint"""
    cfg = load_run_config(None, {**tiny_overrides, "paths.run_dir": str(tmp_path / "vlm")})
    summary = pretrain_service.run(cfg, progress=False)
    return {**tiny_overrides, "paths.vlm_checkpoint": summary.checkpoint}


@pytest.fixture
def seg_checkpoint(pretrained):
    return semiseg_service.train_loop(load_run_config(None, pretrained), progress=False).checkpoint


def first_test_image(dataset_dir) -> Path:
    test_ids = [s.id for s in dataset_repo_ins.load_manifest(dataset_dir) if s.split is Split.TEST]
    return dataset_dir / "images" / f"{test_ids[0]}.pgm"


class TestPretrain:
    def test_outputs(self, tiny_cfg):
        summary = pretrain_service.run(tiny_cfg, progress=False)
        rows = metrics_repo_ins.read_rows(summary.metrics_csv)
        # 16 pairs in batches of 8 for 2 epochs
        assert [int(r["step"]) for r in rows] == [1, 2, 3, 4]
        assert list(rows[0]) == ["step", "epoch", "l_cmc", "l_imc", "l_tg", "total", "tau", "retrieval_i2t", "retrieval_t2i"]
        assert all(0.01 <= float(r["tau"]) <= 100.0 for r in rows)
        assert Path(summary.checkpoint).is_file()
        assert Path(summary.checkpoint).with_suffix(".bin").is_file()
        assert 0.0 <= summary.retrieval_i2t <= 1.0

    def test_dry_run_writes_nothing(self, tiny_cfg):
        summary = pretrain_service.run(tiny_cfg, dry_run=True, progress=False)
        assert summary.checkpoint is None
        assert not Path(tiny_cfg.paths.run_dir).exists()

    def test_deterministic(self, tiny_overrides, tmp_path):
        blobs = []
        for name in ("a", "b"):
            cfg = load_run_config(None, {**tiny_overrides, "paths.run_dir": str(tmp_path / name)})
            summary = pretrain_service.run(cfg, progress=False)
            blobs.append(Path(summary.checkpoint).with_suffix(".bin").read_bytes())
        assert blobs[0] == blobs[1]

    def test_without_uncertainty_modules(self, tiny_overrides):
        cfg = load_run_config(None, {**tiny_overrides, "contrastive.use_sss": False, "contrastive.use_imc": False})
        rows = metrics_repo_ins.read_rows(pretrain_service.run(cfg, progress=False).metrics_csv)
        assert all(r["l_imc"] == "" for r in rows)
        assert all(float(r["l_cmc"]) > 0.0 for r in rows)


class TestTrainSemi:
    def test_text_guided(self, pretrained):
        summary = semiseg_service.train_loop(load_run_config(None, pretrained), progress=False)
        rows = metrics_repo_ins.read_rows(summary.metrics_csv)
        assert list(rows[0]) == [
            "epoch", "l_sup", "l_semi", "l_semi_merged", "l_semi_text", "l_tg", "val_dice", "val_miou"
        ]
        assert 1 <= len(rows) <= 2
        assert summary.best_val_dice == max(float(r["val_dice"]) for r in rows)
        assert Path(summary.checkpoint).is_file()

    def test_without_text(self, tiny_overrides):
        cfg = load_run_config(None, {**tiny_overrides, "semi.use_text": False})
        summary = semiseg_service.train_loop(cfg, progress=False)
        rows = metrics_repo_ins.read_rows(summary.metrics_csv)
        assert list(rows[0]) == ["epoch", "l_sup", "l_semi", "val_dice", "val_miou"]

    def test_checkpoint_model_settings_win(self, pretrained):
        cfg = load_run_config(None, {**pretrained, "model.l_max": 16, "model.seg_channels": 2})
        summary = semiseg_service.train_loop(cfg, progress=False)
        _, meta = checkpoint_repo_ins.load(summary.checkpoint)
        assert meta["model"]["l_max"] == 12
        assert meta["model"]["seg_channels"] == 4

    def test_text_requires_checkpoint(self, tiny_cfg):
        with pytest.raises(ConfigError):
            semiseg_service.train_loop(tiny_cfg, progress=False)

    def test_fully_labeled(self, tiny_overrides):
        cfg = load_run_config(None, {**tiny_overrides, "semi.use_text": False, "semi.labeled_frac": 1.0})
        summary = semiseg_service.train_loop(cfg, progress=False)
        assert 0.0 <= summary.best_val_dice <= 1.0

    def test_reload_reproduces_validation_dice(self, tiny_overrides, dataset_dir):
        cfg = load_run_config(None, {**tiny_overrides, "semi.use_text": False})
        summary = semiseg_service.train_loop(cfg, progress=False)
        result, _ = eval_service.evaluate_checkpoint(summary.checkpoint, dataset_dir, Split.VAL)
        assert result.dice == pytest.approx(summary.best_val_dice, abs=1e-6)

    def test_metrics_csv_is_deterministic(self, tiny_overrides, tmp_path):
        blobs = []
        for name in ("a", "b"):
            cfg = load_run_config(
                None, {**tiny_overrides, "semi.use_text": False, "paths.run_dir": str(tmp_path / name)}
            )
            blobs.append(Path(semiseg_service.train_loop(cfg, progress=False).metrics_csv).read_bytes())
        assert blobs[0] == blobs[1]


class TestEval:
    def test_checkpoint(self, seg_checkpoint, dataset_dir, tmp_path):
        result, path = eval_service.evaluate_checkpoint(seg_checkpoint, dataset_dir, Split.TEST, tmp_path / "eval.csv")
        assert len(result.per_sample) == 4
        rows = metrics_repo_ins.read_rows(path)
        assert rows[-1]["id"] == "MEAN"
        assert float(rows[-1]["dice"]) == pytest.approx(result.dice)

    def test_ground_truth_masks_score_one(self, dataset_dir):
        result, path = eval_service.evaluate_masks(dataset_dir / "masks", dataset_dir, Split.VAL)
        assert result.dice == 1.0 and result.miou == 1.0
        assert path is None


class TestInfer:
    def test_mask_only(self, tiny_overrides, dataset_dir, tmp_path):
        cfg = load_run_config(None, {**tiny_overrides, "semi.use_text": False})
        checkpoint = semiseg_service.train_loop(cfg, progress=False).checkpoint
        outputs = inference_service.infer(checkpoint, first_test_image(dataset_dir), tmp_path / "out")
        assert set(outputs) == {"mask"}
        assert set(np.unique(decode_pgm(Path(outputs["mask"]).read_bytes()))) <= {0, 255}
        with pytest.raises(CheckpointError):
            inference_service.infer(checkpoint, first_test_image(dataset_dir), tmp_path / "out", ["one small lesion"])

    def test_heatmaps(self, seg_checkpoint, dataset_dir, tmp_path):
        texts = ["one small lesion in upper left region", "one tiny spot in upper left area"]
        outputs = inference_service.infer(seg_checkpoint, first_test_image(dataset_dir), tmp_path / "out", texts)
        assert (tmp_path / "out" / "heatmap_0.pgm").is_file()
        assert (tmp_path / "out" / "heatmap_1.pgm").is_file()
        stability = json.loads(Path(outputs["stability"]).read_text())
        assert stability["texts"] == texts
        assert stability["mean_abs_diff"] >= 0.0

    def test_single_heatmap_is_stretched_and_deterministic(self, seg_checkpoint, dataset_dir, tmp_path):
        text = ["two large lesions in lower right region"]
        first = inference_service.infer(seg_checkpoint, first_test_image(dataset_dir), tmp_path / "a", text)
        second = inference_service.infer(seg_checkpoint, first_test_image(dataset_dir), tmp_path / "b", text)
        raw = Path(first["heatmap_0"]).read_bytes()
        assert Path(first["heatmap_0"]).name == "heatmap.pgm"
        assert raw == Path(second["heatmap_0"]).read_bytes()
        heatmap = decode_pgm(raw)
        assert heatmap.min() == 0 and heatmap.max() == 255

    def test_image_size_mismatch(self, seg_checkpoint, tmp_path):
        image = save_pgm(np.zeros((8, 8)), tmp_path / "small.pgm")
        with pytest.raises(ShapeError):
            inference_service.infer(seg_checkpoint, image, tmp_path / "out")


class TestAblation:
    def test_two_variants_one_seed(self, tiny_cfg):
        summary = ablation_service.run(tiny_cfg, seeds=(0,), variants=("baseline", "full"), progress=False)
        rows = metrics_repo_ins.read_rows(summary.csv)
        assert [(r["variant"], r["seed"]) for r in rows] == [
            ("baseline", "0"), ("full", "0"), ("baseline", "MEAN"), ("full", "MEAN")
        ]
        assert set(summary.means) == {"baseline", "full"}
        assert summary.margin_over_baseline == pytest.approx(summary.means["full"] - summary.means["baseline"])
        assert Path(tiny_cfg.paths.run_dir, "full", "seed0", "vlm.json").is_file()
        assert not Path(tiny_cfg.paths.run_dir, "baseline", "seed0", "vlm.json").exists()

    def test_variant_config(self, tiny_cfg, tmp_path):
        cfg = ablation_service.variant_config(tiny_cfg, "no_tg", 2, tmp_path)
        assert (cfg.seed, cfg.pretrain.w_tg, cfg.semi.w_tg) == (2, 0.0, 0.0)
        assert cfg.paths.run_dir == str(tmp_path / "no_tg" / "seed2")
        assert cfg.model == tiny_cfg.model

    def test_unknown_variant(self, tiny_cfg):
        with pytest.raises(ValueError):
            ablation_service.run(tiny_cfg, variants=("nope",), progress=False)
