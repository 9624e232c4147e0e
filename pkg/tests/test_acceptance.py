"""Desk-scale training oracles; run with `pytest -m slow`"""

import pytest

from config.config import load_run_config
from dusss.services import ablation_service, data_service, pretrain_service

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def lesions(tmp_path_factory):
    return data_service.generate(tmp_path_factory.mktemp("lesions"), count=256, seed=7)


def test_pretraining_converges(lesions, tmp_path):
    cfg = load_run_config(None, {"paths.data_dir": str(lesions), "paths.run_dir": str(tmp_path / "run")})
    summary = pretrain_service.run(cfg, progress=False)
    assert summary.last_epoch_l_cmc <= 0.5 * summary.first_epoch_l_cmc
    assert summary.retrieval_i2t >= 0.9
    assert summary.retrieval_t2i >= 0.9


def test_text_guidance_beats_plain_mean_teacher(lesions, tmp_path):
    cfg = load_run_config(
        None,
        {"paths.data_dir": str(lesions), "paths.run_dir": str(tmp_path / "ablation"), "semi.labeled_frac": 0.5},
    )
    summary = ablation_service.run(cfg, seeds=(0, 1, 2), progress=False)
    assert summary.full_beats_baseline, summary.means
    assert summary.full_dominates_variants, summary.means
