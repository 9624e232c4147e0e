import json

import pytest

from cli import main
from cli.common import EXIT_FAILURE, EXIT_OK, EXIT_USAGE


class TestGenData:
    def test_writes_dataset(self, tmp_path, capsys):
        out = tmp_path / "data"
        assert main(["gen-data", "--count", "10", "--seed", "1", "--size", "16", "--out", str(out), "--quiet"]) == EXIT_OK
        assert len((out / "manifest.jsonl").read_text().splitlines()) == 10
        assert capsys.readouterr().out.strip() == str(out)

    def test_missing_out(self):
        assert main(["gen-data", "--count", "10", "--seed", "1"]) == EXIT_USAGE

    @pytest.mark.parametrize("extra", [["--count", "3"], ["--count", "10", "--size", "20"]])
    def test_invalid_request(self, tmp_path, extra):
        assert main(["gen-data", "--seed", "1", "--out", str(tmp_path / "d"), *extra]) == EXIT_USAGE
        assert not (tmp_path / "d").exists()


class TestCommands:
    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_verify_subset(self, capsys):
        assert main(["verify", "--filter", "wasserstein"]) == EXIT_OK
        assert "grad.wasserstein2_sq" in capsys.readouterr().out

    def test_verify_no_match(self):
        assert main(["verify", "--filter", "no-such-check"]) == EXIT_FAILURE

    def test_pretrain_dry_run(self, dataset_dir, tmp_path):
        args = ["pretrain", "--dry-run", "--data-dir", str(dataset_dir), "--run-dir", str(tmp_path / "run")]
        assert main(args) == EXIT_OK

    def test_bad_config_value(self, dataset_dir):
        assert main(["pretrain", "--dry-run", "--data-dir", str(dataset_dir), "--set", "semi.alpha=2"]) == EXIT_USAGE

    def test_bad_config_file(self, dataset_dir, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("nope: 1\n")
        assert main(["pretrain", "--dry-run", "--data-dir", str(dataset_dir), "--config", str(path)]) == EXIT_USAGE

    def test_missing_dataset(self, tmp_path):
        assert main(["pretrain", "--dry-run", "--data-dir", str(tmp_path / "none")]) == EXIT_FAILURE

    def test_missing_checkpoint(self, dataset_dir, tmp_path):
        args = ["eval", "--checkpoint", str(tmp_path / "seg.json"), "--data-dir", str(dataset_dir)]
        assert main(args) == EXIT_FAILURE

    def test_eval_needs_one_source(self, dataset_dir):
        assert main(["eval", "--data-dir", str(dataset_dir)]) == EXIT_USAGE

    def test_eval_masks(self, dataset_dir, capsys):
        args = ["eval", "--masks", str(dataset_dir / "masks"), "--data-dir", str(dataset_dir), "--split", "val"]
        assert main(args) == EXIT_OK
        assert json.loads(capsys.readouterr().out) == {"split": "val", "dice": 1.0, "miou": 1.0}

    def test_train_semi_without_vlm_checkpoint(self, dataset_dir, tmp_path):
        args = ["train-semi", "--data-dir", str(dataset_dir), "--run-dir", str(tmp_path / "run")]
        assert main(args) == EXIT_USAGE
