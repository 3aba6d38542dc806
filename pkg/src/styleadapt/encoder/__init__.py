from .network import Encoder, SUB_ENCODER_KINDS, encode, token_groups
from .losses import (
    EncoderConfig,
    code_regularizer,
    path1_loss,
    path1_terms,
    path2_loss,
    smooth_l1,
)
from .trainer import train_encoder

__all__ = [
    "Encoder",
    "EncoderConfig",
    "SUB_ENCODER_KINDS",
    "code_regularizer",
    "encode",
    "path1_loss",
    "path1_terms",
    "path2_loss",
    "smooth_l1",
    "token_groups",
    "train_encoder",
]
