import json

import numpy as np
import pytest

from dusss.app.data import (
    augment,
    augment_arrays,
    build_vocab,
    caption_position,
    caption_variants,
    decode_pgm,
    encode_pgm,
    gen_synthetic,
    load_pgm,
    quadrant_of,
    save_pgm,
    tokenize,
)
from dusss.app.data.splits import split_labeled
from dusss.app.data.text import hflip_caption, rotate_caption
from dusss.errors import DataFormatError, DatasetError
from dusss.models import AugmentSpec, Split
from dusss.repository import dataset_repo_ins
from dusss.services import data_service


class TestPGM:
    def test_round_trip(self, rng, tmp_path):
        image = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
        path = save_pgm(image, tmp_path / "a.pgm")
        assert path.read_bytes().startswith(b"P5\n7 5\n255\n")
        np.testing.assert_array_equal(decode_pgm(path.read_bytes()), image)
        np.testing.assert_array_equal(np.round(load_pgm(path) * 255.0), image)

    def test_float_images_are_rounded(self):
        assert decode_pgm(encode_pgm(np.array([[0.0, 0.5, 1.0, 2.0]]))).tolist() == [[0, 128, 255, 255]]

    def test_comments_in_header(self):
        raw = b"P5\n# made by hand\n2 1\n255\n\x00\xff"
        assert decode_pgm(raw).tolist() == [[0, 255]]

    def test_wrong_magic(self):
        with pytest.raises(DataFormatError):
            decode_pgm(b"P2\n1 1\n255\n0")

    def test_unsupported_maxval(self):
        with pytest.raises(DataFormatError):
            decode_pgm(b"P5\n1 1\n65535\n\x00\x00")

    def test_truncated_payload(self):
        with pytest.raises(DataFormatError):
            decode_pgm(b"P5\n2 2\n255\n\x00\x00\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_pgm(tmp_path / "nope.pgm")


class TestText:
    def test_tokenize_pads_after_cls(self):
        vocab = build_vocab()
        ids = tokenize("one small lesion in center region", vocab, l_max=10)
        assert ids[0] == vocab.cls_id
        assert ids.shape == (10,)
        assert list(ids[7:]) == [vocab.pad_id] * 3
        assert vocab.unk_id not in ids

    def test_unknown_words(self):
        vocab = build_vocab()
        assert tokenize("one purple lesion", vocab, l_max=5)[2] == vocab.unk_id

    def test_truncation(self):
        vocab = build_vocab()
        assert tokenize("one two three one two three", vocab, l_max=4).shape == (4,)

    def test_caption_variants(self):
        variants = caption_variants("one small lesion in center region")
        # small/tiny x lesion/spot x region/area
        assert len(variants) == 8
        assert variants[0] == "one small lesion in center region"
        assert "one tiny spot in center area" in variants

    def test_position_rewrites(self):
        assert hflip_caption("two large lesions in upper left region") == "two large lesions in upper right region"
        assert rotate_caption("one small lesion in upper left region", 90) == "one small lesion in lower left region"
        assert rotate_caption("one small lesion in center region", 180) == "one small lesion in center region"
        assert caption_position("three tiny spots in lower right area") == "lower right"


class TestSynthetic:
    def test_deterministic(self):
        a, b = gen_synthetic(10, seed=5, size=16), gen_synthetic(10, seed=5, size=16)
        for x, y in zip(a, b):
            assert x.id == y.id and x.text == y.text
            np.testing.assert_array_equal(x.image, y.image)
            np.testing.assert_array_equal(x.mask, y.mask)

    def test_caption_matches_mask(self):
        for sample in gen_synthetic(20, seed=1, size=32):
            assert caption_position(sample.text) == quadrant_of(sample.mask)
            assert 0.02 <= sample.mask.mean() <= 0.40

    def test_splits(self):
        samples = gen_synthetic(20, seed=2, size=16)
        counts = {split: sum(s.split is split for s in samples) for split in Split}
        assert counts == {Split.LABELED: 14, Split.UNLABELED: 0, Split.VAL: 3, Split.TEST: 3}

    @pytest.mark.parametrize("count,size", [(7, 32), (16, 20), (16, 8)])
    def test_rejects_bad_arguments(self, count, size):
        with pytest.raises(DatasetError):
            gen_synthetic(count, seed=0, size=size)


class TestAugment:
    def test_identity_spec(self, rng):
        sample = gen_synthetic(8, seed=0, size=16)[0]
        out = augment(sample, AugmentSpec.identity(), rng)
        np.testing.assert_array_equal(out.image, sample.image)
        assert out.text == sample.text

    @pytest.mark.parametrize("degrees", [90, 180, 270])
    def test_rotation_keeps_caption_and_mask_aligned(self, rng, degrees):
        spec = AugmentSpec(hflip_prob=0.0, rotations=[degrees], brightness_jitter=0.0, synonym_prob=0.0)
        for sample in gen_synthetic(12, seed=4, size=32):
            _, mask, text = augment_arrays(sample.image, sample.mask, sample.text, spec, rng)
            assert caption_position(text) == quadrant_of(mask)

    def test_hflip_keeps_caption_and_mask_aligned(self, rng):
        spec = AugmentSpec(hflip_prob=1.0, rotations=[0], brightness_jitter=0.0, synonym_prob=0.0)
        for sample in gen_synthetic(12, seed=6, size=32):
            _, mask, text = augment_arrays(sample.image, sample.mask, sample.text, spec, rng)
            assert caption_position(text) == quadrant_of(mask)

    def test_brightness_stays_in_range(self, rng):
        spec = AugmentSpec(hflip_prob=0.0, rotations=[0], brightness_jitter=0.5, synonym_prob=0.0)
        image, _, _ = augment_arrays(np.full((4, 4), 0.9), None, "x", spec, rng)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_invalid_rotation(self):
        with pytest.raises(ValueError):
            AugmentSpec(rotations=[45])


class TestSplitLabeled:
    @pytest.mark.parametrize("fraction,expected", [(0.25, 4), (0.5, 7), (1.0, 14)])
    def test_labeled_count(self, fraction, expected):
        pool = [s for s in gen_synthetic(20, seed=2, size=16) if s.split is Split.LABELED]
        labeled, unlabeled = split_labeled(pool, fraction, seed=0)
        assert len(labeled) == expected
        assert len(unlabeled) == len(pool) - expected
        assert all(s.mask is None and s.split is Split.UNLABELED for s in unlabeled)
        assert {s.id for s in labeled}.isdisjoint({s.id for s in unlabeled})

    def test_seeded(self):
        pool = [s for s in gen_synthetic(20, seed=2, size=16) if s.split is Split.LABELED]
        first = [s.id for s in split_labeled(pool, 0.5, seed=1)[0]]
        assert first == [s.id for s in split_labeled(pool, 0.5, seed=1)[0]]


class TestDatasetRepository:
    def test_generate_and_load(self, dataset_dir):
        lines = (dataset_dir / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 24
        grouped, vocab = data_service.load(dataset_dir)
        assert len(grouped[Split.LABELED]) == 16
        assert vocab.tokens == build_vocab().tokens

    def test_regeneration_is_byte_identical(self, tmp_path):
        a = data_service.generate(tmp_path / "a", count=8, seed=9, size=16)
        b = data_service.generate(tmp_path / "b", count=8, seed=9, size=16)
        for path in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
            assert (a / path).read_bytes() == (b / path).read_bytes()

    def _write(self, root, records):
        root.mkdir(parents=True, exist_ok=True)
        save_pgm(np.zeros((4, 4)), root / "images" / "x.pgm")
        save_pgm(np.ones((4, 4)), root / "masks" / "x.pgm")
        (root / "manifest.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))

    def test_unlabeled_sample_with_mask(self, tmp_path):
        self._write(tmp_path, [{"id": "x", "image": "images/x.pgm", "mask": "masks/x.pgm", "text": "t", "split": "unlabeled"}])
        with pytest.raises(DatasetError):
            dataset_repo_ins.load_manifest(tmp_path)

    def test_labeled_sample_without_mask(self, tmp_path):
        self._write(tmp_path, [{"id": "x", "image": "images/x.pgm", "text": "t", "split": "labeled"}])
        with pytest.raises(DatasetError):
            dataset_repo_ins.load_manifest(tmp_path)

    def test_duplicate_ids(self, tmp_path):
        record = {"id": "x", "image": "images/x.pgm", "mask": "masks/x.pgm", "text": "t", "split": "val"}
        self._write(tmp_path, [record, record])
        with pytest.raises(DatasetError):
            dataset_repo_ins.load_manifest(tmp_path)

    def test_every_bad_line_is_reported(self, tmp_path):
        self._write(tmp_path, [{"id": "x"}, {"id": "y", "split": "nope"}])
        with pytest.raises(DatasetError) as err:
            dataset_repo_ins.load_manifest(tmp_path)
        assert "line 1" in str(err.value) and "line 2" in str(err.value)
