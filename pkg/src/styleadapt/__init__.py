"""Few-shot adaptation of style-based image generators.

Two trainable pieces share one latent space: a decoder adapted from a
source-domain generator to a small artistic target set with contrastive and
style-structure losses, and an encoder that embeds photos into the stacked
latent space using dual-path training. Metrics, checkpointing and a CLI
round out the pipeline.
"""

from .errors import (
    ConfigError,
    InvalidArgumentError,
    NumericFailureError,
    StyleAdaptError,
    UndefinedMetricError,
)
from .latent import (
    ExtendedLatent,
    LatentCode,
    ResolutionSpec,
    extend_repeat,
    layer_count,
    repeat_batch,
    sample_z,
    stack_zplus,
    stage_generator,
)
from .generator import (
    AdaINInputTrace,
    Generator,
    MappingNetwork,
    adain,
    clone_for_adaptation,
    map_to_style,
    synthesize,
)
from .perceptual import (
    PerceptualWeights,
    ToyBackbone,
    ToyIdentityEmbedder,
    identity_distance,
    lpips,
    modified_lpips,
    pairwise_lpips,
    pairwise_modified_lpips,
)
from .adaptation import (
    AdaptationConfig,
    DiscriminatorPair,
    DistanceMatrix,
    adapt,
    adversarial_losses,
    cdt_loss,
    cdt_variant_loss,
    decoder_total_loss,
    distance_matrix,
    kl_adain_loss,
    triplet_loss,
)
from .encoder import (
    Encoder,
    EncoderConfig,
    encode,
    path1_loss,
    path2_loss,
    smooth_l1,
    train_encoder,
)
from .metrics import (
    MetricsReport,
    backbone_fid_features,
    fid,
    latent_diagnostic_export,
    lpips_cluster,
    lpips_distance_eval,
)
from .config import PRESETS, RunConfig, build_config
from .checkpoint import (
    load_backbone,
    load_checkpoint,
    load_discriminators,
    load_encoder,
    load_generator,
    save_backbone,
    save_checkpoint,
    save_discriminators,
    save_encoder,
    save_generator,
    state_checksum,
)

__version__ = "0.1.0"
