"""
Closed caption grammar: vocabulary, tokenizer, synonym and position rewrites.

Captions read "{count} {size} {noun} in {position} region", for example
"two small lesions in upper left region" or "one large lesion in center region".
"""

from __future__ import annotations

import itertools
from typing import Dict, List, Optional

import numpy as np

from dusss.models import Vocabulary

PAD, CLS, UNK = "<pad>", "<cls>", "<unk>"

COUNT_WORDS = ["one", "two", "three"]
SIZE_WORDS = ["small", "large"]
POSITION_WORDS = ["upper", "lower", "left", "right", "center"]
NOUN_WORDS = ["lesion", "lesions", "region"]
GLUE_WORDS = ["in", "the", "at", "a"]

# meaning-preserving swaps; applied in both directions
SYNONYMS: Dict[str, str] = {
    "small": "tiny",
    "large": "big",
    "lesion": "spot",
    "lesions": "spots",
    "region": "area",
}
_REVERSE = {v: k for k, v in SYNONYMS.items()}

DEFAULT_L_MAX = 16


def build_vocab() -> Vocabulary:
    tokens = [PAD, CLS, UNK] + COUNT_WORDS + SIZE_WORDS + POSITION_WORDS + NOUN_WORDS + GLUE_WORDS
    tokens += [SYNONYMS[w] for w in SYNONYMS]
    return Vocabulary(tokens=tokens)


def normalize_text(text: str) -> List[str]:
    return text.lower().split()


def tokenize(text: str, vocab: Vocabulary, l_max: int = DEFAULT_L_MAX) -> np.ndarray:
    """[CLS] + word ids (UNK for unknown words), truncated/padded to l_max"""
    ids = [vocab.cls_id] + [vocab.id_of(w) for w in normalize_text(text)]
    ids = ids[:l_max]
    ids += [vocab.pad_id] * (l_max - len(ids))
    return np.asarray(ids, dtype=np.int64)


def tokenize_batch(texts: List[str], vocab: Vocabulary, l_max: int = DEFAULT_L_MAX) -> np.ndarray:
    return np.stack([tokenize(t, vocab, l_max) for t in texts]) if texts else np.zeros((0, l_max), dtype=np.int64)


def make_caption(count: int, large: bool, position: str) -> str:
    noun = "lesion" if count == 1 else "lesions"
    size = "large" if large else "small"
    return f"{COUNT_WORDS[count - 1]} {size} {noun} in {position} region"


def caption_position(text: str) -> Optional[str]:
    """The position phrase of a grammar caption ("upper left", "center", ...)"""
    words = normalize_text(text)
    if "in" not in words:
        return None
    tail = words[words.index("in") + 1 :]
    pos = [w for w in tail if w in POSITION_WORDS]
    return " ".join(pos) if pos else None


def canonical(text: str) -> str:
    """Synonyms mapped back to the base grammar words"""
    return " ".join(_REVERSE.get(w, w) for w in normalize_text(text))


def swap_synonyms(text: str, rng: np.random.Generator, prob: float) -> str:
    words = []
    for w in normalize_text(text):
        partner = SYNONYMS.get(w) or _REVERSE.get(w)
        if partner is not None and prob > 0.0 and rng.random() < prob:
            w = partner
        words.append(w)
    return " ".join(words)


def caption_variants(text: str) -> List[str]:
    """Every synonym rewrite of `text`, the original first"""
    words = normalize_text(text)
    options = []
    for w in words:
        partner = SYNONYMS.get(w) or _REVERSE.get(w)
        options.append([w, partner] if partner else [w])
    return [" ".join(choice) for choice in itertools.product(*options)]


_HFLIP = {"left": "right", "right": "left"}
# one clockwise quarter turn of the image (np.rot90 with k=-1)
_ROT90_CW = {"upper left": "upper right", "upper right": "lower right", "lower right": "lower left", "lower left": "upper left"}


def _split_position(words: List[str]) -> Optional[tuple]:
    """(start, end) of the position phrase between 'in' and the noun that follows"""
    if "in" not in words:
        return None
    start = words.index("in") + 1
    end = start
    while end < len(words) and words[end] in POSITION_WORDS:
        end += 1
    return (start, end) if end > start else None


def _rewrite_position(text: str, mapping) -> str:
    words = normalize_text(text)
    span = _split_position(words)
    if span is None:
        return text
    start, end = span
    phrase = " ".join(words[start:end])
    new = mapping(phrase)
    return " ".join(words[:start] + new.split() + words[end:])


def hflip_caption(text: str) -> str:
    return _rewrite_position(text, lambda p: " ".join(_HFLIP.get(w, w) for w in p.split()))


def rotate_caption(text: str, degrees: int) -> str:
    """Position words after rotating the image `degrees` counter-clockwise"""
    quarter_turns_cw = (-degrees // 90) % 4

    def turn(phrase: str) -> str:
        for _ in range(quarter_turns_cw):
            phrase = _ROT90_CW.get(phrase, phrase)
        return phrase

    return _rewrite_position(text, turn)
