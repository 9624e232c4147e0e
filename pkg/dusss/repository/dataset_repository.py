"""
Dataset directory:

    manifest.jsonl   {"id", "image", "mask"?, "text", "split"} per line
    images/*.pgm
    masks/*.pgm
    vocab.json       {"tokens": [...]}
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import ValidationError

from dusss.app.data.pgm import load_pgm, save_pgm
from dusss.errors import DataFormatError, DatasetError
from dusss.models import MASKED_SPLITS, Sample, SampleRecord, Split, Vocabulary

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
VOCAB = "vocab.json"


class DatasetRepository:
    def write(self, out_dir: Union[str, Path], samples: Sequence[Sample], vocab: Vocabulary) -> Path:
        """Write images, masks, manifest (sorted by id) and vocabulary"""
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DatasetError(f"gen_synthetic: cannot create {out_dir}: {exc}") from None

        lines = []
        for sample in sorted(samples, key=lambda s: s.id):
            record = {"id": sample.id, "image": f"images/{sample.id}.pgm"}
            save_pgm(sample.image, out_dir / record["image"])
            if sample.mask is not None:
                record["mask"] = f"masks/{sample.id}.pgm"
                save_pgm(sample.mask.astype(np.float64), out_dir / record["mask"])
            record.update({"text": sample.text, "split": sample.split.value})
            lines.append(json.dumps(record, sort_keys=True))

        (out_dir / MANIFEST).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        (out_dir / VOCAB).write_text(json.dumps({"tokens": vocab.tokens}, indent=2) + "\n", encoding="utf-8")
        logger.info("wrote %d samples to %s", len(lines), out_dir)
        return out_dir

    def _manifest_path(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        return path / MANIFEST if path.is_dir() else path

    def _records(self, manifest: Path) -> List[SampleRecord]:
        if not manifest.is_file():
            raise DatasetError(f"load_manifest: no manifest at {manifest}")
        records, errors = [], []
        for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(SampleRecord.model_validate(json.loads(line)))
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: not JSON ({exc.msg})")
            except ValidationError as exc:
                detail = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
                errors.append(f"line {lineno}: {detail}")
        if errors:
            raise DatasetError(f"load_manifest: {manifest}\n" + "\n".join(errors))
        return records

    def load_manifest(self, path: Union[str, Path]) -> List[Sample]:
        """Samples sorted by id; masks of unlabeled samples are never read"""
        manifest = self._manifest_path(path)
        root = manifest.parent
        records = self._records(manifest)

        seen: Dict[str, int] = {}
        for r in records:
            seen[r.id] = seen.get(r.id, 0) + 1
        duplicates = sorted(i for i, n in seen.items() if n > 1)
        if duplicates:
            raise DatasetError(f"load_manifest: duplicate id(s) {duplicates}")

        samples = []
        for r in sorted(records, key=lambda r: r.id):
            if r.split is Split.UNLABELED and r.mask is not None:
                raise DatasetError(f"load_manifest: unlabeled sample {r.id!r} carries a mask path")
            if r.split in MASKED_SPLITS and r.mask is None:
                raise DatasetError(f"load_manifest: {r.split.value} sample {r.id!r} has no mask")
            image = load_pgm(root / r.image)
            mask = (load_pgm(root / r.mask) >= 0.5).astype(np.uint8) if r.mask is not None else None
            try:
                samples.append(Sample(id=r.id, image=image, mask=mask, text=r.text, split=r.split))
            except ValidationError as exc:
                raise DatasetError(f"load_manifest: {exc.errors()[0]['msg']}") from None
        return samples

    def load_vocab(self, dataset_dir: Union[str, Path]) -> Vocabulary:
        path = Path(dataset_dir) / VOCAB
        if not path.is_file():
            raise DatasetError(f"no vocabulary at {path}")
        return Vocabulary.model_validate(json.loads(path.read_text(encoding="utf-8")))

    def oracle_masks(self, dataset_dir: Union[str, Path], ids: Sequence[str]) -> Dict[str, np.ndarray]:
        """Masks on disk for the given ids, including those hidden by the labeled split; evaluation only"""
        root = Path(dataset_dir)
        masks = {}
        for sample_id in ids:
            path = root / "masks" / f"{sample_id}.pgm"
            try:
                masks[sample_id] = (load_pgm(path) >= 0.5).astype(np.uint8)
            except DataFormatError:
                raise DatasetError(f"missing ground truth for {sample_id!r} ({path})") from None
        return masks


# Singleton instance
dataset_repo_ins = DatasetRepository()
