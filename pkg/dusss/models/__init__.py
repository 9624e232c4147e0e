from .models import (
    MASKED_SPLITS,
    AblationSummary,
    AugmentSpec,
    Batch,
    CheckResult,
    EncodedPair,
    EvalResult,
    GaussianEmbedding,
    ImageFeatures,
    LossReport,
    MergeMode,
    PairwiseScores,
    PretrainReport,
    PretrainSummary,
    PseudoLabel,
    PseudoLabelSource,
    Sample,
    SampleRecord,
    SampleScore,
    SemiSummary,
    Split,
    SSSConfig,
    StepWeights,
    TextFeatures,
    TgStage,
    Vocabulary,
)

__all__ = [
    "MASKED_SPLITS",
    "AblationSummary",
    "AugmentSpec",
    "Batch",
    "CheckResult",
    "EncodedPair",
    "EvalResult",
    "GaussianEmbedding",
    "ImageFeatures",
    "LossReport",
    "MergeMode",
    "PairwiseScores",
    "PretrainReport",
    "PretrainSummary",
    "PseudoLabel",
    "PseudoLabelSource",
    "Sample",
    "SampleRecord",
    "SampleScore",
    "SemiSummary",
    "Split",
    "SSSConfig",
    "StepWeights",
    "TextFeatures",
    "TgStage",
    "Vocabulary",
]
