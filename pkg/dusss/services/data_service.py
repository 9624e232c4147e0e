from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from dusss.app.data import augment_arrays, build_vocab, gen_synthetic, tokenize_batch
from dusss.models import AugmentSpec, Batch, Sample, Split, Vocabulary
from dusss.repository import dataset_repo_ins

logger = logging.getLogger(__name__)


class DataService:
    """Dataset generation, loading and batching"""

    def generate(self, out_dir: Union[str, Path], count: int, seed: int, size: int = 32) -> Path:
        samples = gen_synthetic(count, seed, size)
        return dataset_repo_ins.write(out_dir, samples, build_vocab())

    def load(self, data_dir: Union[str, Path]) -> Tuple[Dict[Split, List[Sample]], Vocabulary]:
        """Samples grouped by split, plus the dataset vocabulary"""
        samples = dataset_repo_ins.load_manifest(data_dir)
        vocab = dataset_repo_ins.load_vocab(data_dir)
        grouped: Dict[Split, List[Sample]] = {split: [] for split in Split}
        for sample in samples:
            grouped[sample.split].append(sample)
        logger.info(
            "loaded %s: %s",
            data_dir,
            ", ".join(f"{split.value}={len(items)}" for split, items in grouped.items() if items),
        )
        return grouped, vocab

    def make_batch(self, samples: Sequence[Sample], vocab: Optional[Vocabulary], l_max: int) -> Batch:
        masks = None
        if samples and all(s.mask is not None for s in samples):
            masks = np.stack([s.mask for s in samples]).astype(np.float64)
        texts = [s.text for s in samples]
        return Batch(
            ids=[s.id for s in samples],
            images=np.stack([s.image for s in samples]),
            masks=masks,
            tokens=tokenize_batch(texts, vocab, l_max) if vocab is not None else None,
            texts=texts,
        )

    def augmented_batch(
        self,
        samples: Sequence[Sample],
        vocab: Vocabulary,
        l_max: int,
        spec: AugmentSpec,
        rng: np.random.Generator,
    ) -> Batch:
        """Second view of every pair for the intra-modal positives"""
        images, texts = [], []
        for s in samples:
            image, _, text = augment_arrays(s.image, None, s.text, spec, rng)
            images.append(image)
            texts.append(text)
        return Batch(
            ids=[s.id for s in samples],
            images=np.stack(images),
            tokens=tokenize_batch(texts, vocab, l_max),
            texts=texts,
        )

    def batches(
        self,
        samples: Sequence[Sample],
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
        min_size: int = 1,
    ) -> Iterator[List[Sample]]:
        """Shuffled (when `rng` is given) chunks; a short tail below `min_size` joins the previous chunk"""
        order = rng.permutation(len(samples)) if rng is not None else np.arange(len(samples))
        chunks = [list(order[i : i + batch_size]) for i in range(0, len(order), batch_size)]
        if len(chunks) > 1 and len(chunks[-1]) < min_size:
            chunks[-2].extend(chunks.pop())
        for chunk in chunks:
            if len(chunk) >= min_size:
                yield [samples[i] for i in chunk]


# Singleton instance
data_service = DataService()
