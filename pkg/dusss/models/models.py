from typing import Any, Dict, List, Optional
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ArrayModel(BaseModel):
    """Base for records that carry NumPy arrays or tensors"""

    model_config = ConfigDict(arbitrary_types_allowed=True)


class Split(str, Enum):
    """Role of a sample in an experiment"""

    LABELED = "labeled"
    UNLABELED = "unlabeled"
    VAL = "val"
    TEST = "test"


MASKED_SPLITS = {Split.LABELED, Split.VAL, Split.TEST}


class PseudoLabelSource(str, Enum):
    TEACHER = "teacher"
    TEXT = "text"
    MERGED = "merged"


class MergeMode(str, Enum):
    """How the teacher map and the text-guided mask are fused"""

    LITERAL = "literal"  # sigmoid(p_teacher + p_text)
    LOGIT = "logit"  # sigmoid(logit(p_teacher) + logit(p_text))


class TgStage(str, Enum):
    """Where the text-guided loss is optimized"""

    BOTH = "both"
    PRETRAIN = "pretrain"
    SEGMENT = "segment"


class SampleRecord(BaseModel):
    """One manifest line: file references relative to the dataset directory"""

    id: str
    image: str
    mask: Optional[str] = None
    text: str
    split: Split


class Sample(ArrayModel):
    """Grayscale image with its caption and, for masked splits, a binary mask"""

    id: str
    image: np.ndarray
    mask: Optional[np.ndarray] = None
    text: str
    split: Split

    @model_validator(mode="after")
    def _mask_matches_split(self) -> "Sample":
        if (self.mask is not None) != (self.split in MASKED_SPLITS):
            state = "carries" if self.mask is not None else "lacks"
            raise ValueError(f"sample {self.id!r} in split {self.split.value!r} {state} a mask")
        if self.mask is not None and self.mask.shape != self.image.shape:
            raise ValueError(f"sample {self.id!r}: mask {self.mask.shape} vs image {self.image.shape}")
        return self


class Vocabulary(BaseModel):
    """Closed token list; a token's id is its position"""

    tokens: List[str]

    @model_validator(mode="after")
    def _unique(self) -> "Vocabulary":
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        return self

    def id_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            return self.tokens.index("<unk>")

    @property
    def pad_id(self) -> int:
        return self.tokens.index("<pad>")

    @property
    def cls_id(self) -> int:
        return self.tokens.index("<cls>")

    @property
    def unk_id(self) -> int:
        return self.tokens.index("<unk>")

    def __len__(self) -> int:
        return len(self.tokens)


class AugmentSpec(BaseModel):
    """Random view generation for the intra-modal positives"""

    model_config = ConfigDict(extra="forbid")

    hflip_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    rotations: List[int] = Field(default_factory=lambda: [0, 90, 180, 270])
    brightness_jitter: float = Field(default=0.1, ge=0.0, le=0.5)
    synonym_prob: float = Field(default=0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _valid_rotations(self) -> "AugmentSpec":
        bad = [r for r in self.rotations if r not in (0, 90, 180, 270)]
        if bad or not self.rotations:
            raise ValueError(f"rotations must be a non-empty subset of 0/90/180/270, got {self.rotations}")
        return self

    @classmethod
    def identity(cls) -> "AugmentSpec":
        return cls(hflip_prob=0.0, rotations=[0], brightness_jitter=0.0, synonym_prob=0.0)


class SSSConfig(BaseModel):
    """Scale a, offset b and constraint degree lambda of the similarity supervision"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    a: float = Field(default=1.0, gt=0.0)
    b: float = 0.0
    lam: float = Field(default=1.0, gt=0.0, alias="lambda")


class GaussianEmbedding(ArrayModel):
    """Diagonal Gaussian; rows are samples when batched"""

    mu: Any
    sigma: Any


class ImageFeatures(ArrayModel):
    patch_grid: Any  # (N, d, P, P)
    cls: Any  # (N, d)
    semantic: Any  # (N, d_s)


class TextFeatures(ArrayModel):
    token_grid: Any  # (N, L, d)
    cls: Any  # (N, d)
    semantic: Any  # (N, d_s)
    t_f: Any  # (N, d)
    pad_mask: np.ndarray  # (N, L) True on real tokens


class EncodedPair(ArrayModel):
    image: ImageFeatures
    text: TextFeatures
    image_gaussian: Optional[GaussianEmbedding] = None
    text_gaussian: Optional[GaussianEmbedding] = None


class PairwiseScores(ArrayModel):
    """N x N matrices; row i scores anchor i against candidate j"""

    sim: Any
    d_s: Any
    d_2w: Any
    sim_hat: Any


class PseudoLabel(ArrayModel):
    map: np.ndarray
    source: PseudoLabelSource

    @model_validator(mode="after")
    def _in_unit_range(self) -> "PseudoLabel":
        if self.map.size and (self.map.min() < 0.0 or self.map.max() > 1.0):
            raise ValueError(f"{self.source.value} pseudo-label outside [0, 1]")
        return self


class LossReport(BaseModel):
    """Scalar losses of one segmentation step"""

    l_sup: float
    l_semi_merged: Optional[float] = None
    l_semi_text: Optional[float] = None
    l_semi: float = 0.0
    l_tg: Optional[float] = None
    total: float


class PretrainReport(BaseModel):
    """Scalar losses of one pretraining step"""

    l_cmc: float
    l_imc: Optional[float] = None
    l_tg: Optional[float] = None
    total: float


class SampleScore(BaseModel):
    id: str
    dice: float = Field(ge=0.0, le=1.0)
    iou: float = Field(ge=0.0, le=1.0)


class EvalResult(BaseModel):
    """Per-sample and mean overlap metrics"""

    dice: float = Field(ge=0.0, le=1.0)
    miou: float = Field(ge=0.0, le=1.0)
    per_sample: List[SampleScore] = Field(default_factory=list)


class CheckResult(BaseModel):
    """Outcome of one verification check"""

    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


class Batch(ArrayModel):
    """Stacked samples: images (N, H, W), masks (N, H, W) when labeled, token ids (N, L)"""

    ids: List[str]
    images: np.ndarray
    masks: Optional[np.ndarray] = None
    tokens: Optional[np.ndarray] = None
    texts: List[str] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)


class StepWeights(BaseModel):
    """Loss weights and switches of one segmentation step"""

    w_semi: float = Field(default=1.0, ge=0.0)
    w_tg: float = Field(default=0.1, ge=0.0)
    use_text: bool = True
    merge_mode: MergeMode = MergeMode.LITERAL
    tg_in_step: bool = True
    student_noise: float = Field(default=0.05, ge=0.0)


class PretrainSummary(BaseModel):
    """Outcome of a Step 1 run"""

    checkpoint: Optional[str] = None
    metrics_csv: Optional[str] = None
    epochs: int = 0
    first_epoch_l_cmc: Optional[float] = None
    last_epoch_l_cmc: Optional[float] = None
    retrieval_i2t: Optional[float] = None
    retrieval_t2i: Optional[float] = None


class SemiSummary(BaseModel):
    """Outcome of a Step 2 run"""

    checkpoint: str
    metrics_csv: str
    epochs_run: int
    best_epoch: int
    best_val_dice: float
    best_val_miou: float
    stopped_early: bool = False


class AblationSummary(BaseModel):
    """Mean validation Dice per variant and the directional verdicts"""

    csv: str
    means: Dict[str, float]
    margin_over_baseline: float
    full_beats_baseline: bool
    full_dominates_variants: bool
