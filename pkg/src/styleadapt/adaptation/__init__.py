from .losses import (
    AdaptationConfig,
    DistanceMatrix,
    CDT_VARIANTS,
    cdt_loss,
    cdt_variant_loss,
    decoder_total_loss,
    distance_matrix,
    kl_adain_loss,
    triplet_loss,
)
from .discriminators import (
    AdversarialResult,
    DiscriminatorPair,
    ImageDiscriminator,
    PatchDiscriminator,
    adversarial_losses,
)
from .trainer import FEW_SHOT_LIMIT, adapt, sample_anchor_batch

__all__ = [
    "AdaptationConfig",
    "AdversarialResult",
    "CDT_VARIANTS",
    "DiscriminatorPair",
    "DistanceMatrix",
    "FEW_SHOT_LIMIT",
    "ImageDiscriminator",
    "PatchDiscriminator",
    "adapt",
    "adversarial_losses",
    "cdt_loss",
    "cdt_variant_loss",
    "decoder_total_loss",
    "distance_matrix",
    "kl_adain_loss",
    "sample_anchor_batch",
    "triplet_loss",
]
