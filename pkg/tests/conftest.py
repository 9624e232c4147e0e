from pathlib import Path

import numpy as np
import pytest

from config.config import load_run_config
from dusss.app.tensor import precision
from dusss.services import data_service

TINY_MODEL = {
    "model.image_size": 16,
    "model.patch": 4,
    "model.d": 8,
    "model.d_s": 6,
    "model.d_u": 4,
    "model.l_max": 12,
    "model.seg_channels": 4,
    "model.dtype": "float64",
}


@pytest.fixture(autouse=True)
def float64():
    """Every test builds tensors in float64 unless it selects otherwise"""
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """24 synthetic 16x16 samples: 16 training, 4 val, 4 test"""
    out = tmp_path_factory.mktemp("data")
    return data_service.generate(out, count=24, seed=3, size=16)


@pytest.fixture
def tiny_overrides(dataset_dir, tmp_path):
    return {
        **TINY_MODEL,
        "pretrain.epochs": 2,
        "pretrain.batch_size": 8,
        "semi.epochs": 2,
        "semi.patience": 2,
        "semi.batch_size": 4,
        "semi.unlabeled_batch_size": 4,
        "paths.data_dir": str(dataset_dir),
        "paths.run_dir": str(tmp_path / "run"),
    }


@pytest.fixture
def tiny_cfg(tiny_overrides):
    return load_run_config(None, tiny_overrides)
