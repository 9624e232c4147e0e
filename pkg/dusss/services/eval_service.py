from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from dusss.app.data.pgm import load_pgm
from dusss.app.metrics import evaluate
from dusss.app.tensor import precision
from dusss.errors import DatasetError
from dusss.models import EvalResult, Split
from dusss.repository import dataset_repo_ins, metrics_repo_ins
from dusss.services.model_factory import load_segmenter
from dusss.services.semiseg_service import semiseg_service

logger = logging.getLogger(__name__)


class EvalService:
    """Dice / IoU of a checkpoint or of a directory of predicted masks"""

    def _split(self, data_dir: Union[str, Path], split: Split):
        samples = [s for s in dataset_repo_ins.load_manifest(data_dir) if s.split is split]
        if not samples:
            raise DatasetError(f"eval: split {split.value!r} of {data_dir} is empty")
        truth = dataset_repo_ins.oracle_masks(data_dir, [s.id for s in samples])
        return samples, truth

    def evaluate_checkpoint(
        self,
        checkpoint: Union[str, Path],
        data_dir: Union[str, Path],
        split: Split = Split.TEST,
        out_csv: Optional[Union[str, Path]] = None,
    ) -> Tuple[EvalResult, Optional[Path]]:
        samples, truth = self._split(data_dir, split)
        student, _, model, _, _ = load_segmenter(checkpoint)
        with precision(model.dtype):
            probs = semiseg_service.predict(student, np.stack([s.image for s in samples]))
        result = evaluate([s.id for s in samples], probs, [truth[s.id] for s in samples])
        return result, self._write(result, out_csv)

    def evaluate_masks(
        self,
        mask_dir: Union[str, Path],
        data_dir: Union[str, Path],
        split: Split = Split.TEST,
        out_csv: Optional[Union[str, Path]] = None,
    ) -> Tuple[EvalResult, Optional[Path]]:
        """Predictions read from `<mask_dir>/<id>.pgm`, grey levels scaled to [0, 1]"""
        samples, truth = self._split(data_dir, split)
        preds = [load_pgm(Path(mask_dir) / f"{s.id}.pgm") for s in samples]
        result = evaluate([s.id for s in samples], preds, [truth[s.id] for s in samples])
        return result, self._write(result, out_csv)

    def _write(self, result: EvalResult, out_csv: Optional[Union[str, Path]]) -> Optional[Path]:
        logger.info("dice=%.4f miou=%.4f over %d samples", result.dice, result.miou, len(result.per_sample))
        return metrics_repo_ins.write_eval(out_csv, result) if out_csv else None


# Singleton instance
eval_service = EvalService()
