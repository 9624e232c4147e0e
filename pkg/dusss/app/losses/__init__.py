from dusss.app.losses.contrastive import (
    Temperature,
    cmc_loss,
    imc_loss,
    info_nce,
    mask_pooled_features,
    tg_loss,
)
from dusss.app.losses.segmentation import (
    binary_cross_entropy,
    merge_pseudo,
    semi_losses,
    sup_loss,
    text_mask,
    text_mask_probs,
)
from dusss.app.losses.uncertainty import (
    cosine_similarity_matrix,
    pairwise_scores,
    relative_uncertainty,
    semantic_distance,
    sss_factor,
    uncertain_sim,
    uncertainty_level,
    wasserstein2_sq,
)

__all__ = [
    "Temperature",
    "binary_cross_entropy",
    "cmc_loss",
    "cosine_similarity_matrix",
    "imc_loss",
    "info_nce",
    "mask_pooled_features",
    "merge_pseudo",
    "pairwise_scores",
    "relative_uncertainty",
    "semantic_distance",
    "semi_losses",
    "sss_factor",
    "sup_loss",
    "text_mask",
    "text_mask_probs",
    "tg_loss",
    "uncertain_sim",
    "uncertainty_level",
    "wasserstein2_sq",
]
