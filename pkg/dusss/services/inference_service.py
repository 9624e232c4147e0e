from __future__ import annotations

import itertools
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from dusss.app.data import load_pgm, save_pgm, tokenize_batch
from dusss.app.losses import text_mask_probs
from dusss.app.metrics import binarize
from dusss.app.tensor import no_grad, precision
from dusss.errors import CheckpointError, ShapeError
from dusss.repository import metrics_repo_ins
from dusss.services.model_factory import load_segmenter
from dusss.services.semiseg_service import semiseg_service

logger = logging.getLogger(__name__)


def scale_heatmap(y: np.ndarray) -> np.ndarray:
    """Min-max stretch to [0, 1]; a constant map keeps its value"""
    lo, hi = float(y.min()), float(y.max())
    if hi - lo <= 0.0:
        return np.clip(y, 0.0, 1.0)
    return (y - lo) / (hi - lo)


class InferenceService:
    """Predicted mask and text-guided heatmaps for one image"""

    def infer(
        self,
        checkpoint: Union[str, Path],
        image_path: Union[str, Path],
        out_dir: Union[str, Path],
        texts: Optional[Sequence[str]] = None,
    ) -> Dict[str, str]:
        out_dir = Path(out_dir)
        texts = list(texts or [])
        student, vlm, model, vocab, _ = load_segmenter(checkpoint)
        image = load_pgm(image_path)
        if image.shape != (model.image_size, model.image_size):
            raise ShapeError(f"infer: image {image.shape} vs model size {model.image_size}")

        outputs: Dict[str, str] = {}
        with precision(model.dtype):
            probs = semiseg_service.predict(student, image[None])[0]
            outputs["mask"] = str(save_pgm(binarize(probs).astype(np.float64), out_dir / "mask.pgm"))
            if not texts:
                return outputs
            if vlm is None:
                raise CheckpointError(f"infer: {checkpoint} was trained without the text pathway; --text unavailable")

            maps: List[np.ndarray] = []
            with no_grad():
                for text in texts:
                    v_f, t_f = vlm.pixel_and_text_features(image[None], tokenize_batch([text], vocab, model.l_max))
                    maps.append(text_mask_probs(v_f, t_f).data[0].astype(np.float64))

        for i, y in enumerate(maps):
            name = "heatmap.pgm" if len(maps) == 1 else f"heatmap_{i}.pgm"
            outputs[f"heatmap_{i}"] = str(save_pgm(scale_heatmap(y), out_dir / name))

        if len(maps) > 1:
            pairs = [
                {"a": texts[i], "b": texts[j], "mean_abs_diff": float(np.mean(np.abs(maps[i] - maps[j])))}
                for i, j in itertools.combinations(range(len(maps)), 2)
            ]
            payload = {
                "texts": texts,
                "pairs": pairs,
                "mean_abs_diff": float(np.mean([p["mean_abs_diff"] for p in pairs])),
            }
            outputs["stability"] = str(metrics_repo_ins.write_json(out_dir / "heatmap_stability.json", payload))
        logger.info("infer: wrote %s", ", ".join(sorted(outputs.values())))
        return outputs


# Singleton instance
inference_service = InferenceService()
