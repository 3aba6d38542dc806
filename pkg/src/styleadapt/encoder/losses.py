"""Encoder training objectives for both reconstruction paths."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..errors import InvalidArgumentError, NumericFailureError
from ..latent import ExtendedLatent
from ..perceptual import identity_distance, lpips


@dataclass
class EncoderConfig:
    """Hyper-parameters of encoder training.

    Loss weights are the full-scale recipe; iteration counts default to
    desk scale (the full-scale run uses 170k reconstruction-only steps
    followed by 70k dual-path steps, selectable via the encoder-fullscale
    preset).
    """

    l2_weight: float = 1.0
    lpips_weight: float = 0.8
    reg_weight: float = 0.0
    identity_weight: float = 0.1
    z_predict_weight: float = 0.1
    path1_weight: float = 1.0
    learning_rate: float = 1e-4
    stage1_iterations: int = 5000
    dual_path_iterations: int = 2000
    batch_size: int = 8
    checkpoint_interval: int = 0

    def validate(self):
        for name in ("l2_weight", "lpips_weight", "reg_weight", "identity_weight",
                     "z_predict_weight", "path1_weight"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")


def smooth_l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Huber-style difference, mean over elements: 0.5 d^2 for |d| < 1, |d| - 0.5 beyond."""
    a = torch.as_tensor(a)
    b = torch.as_tensor(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return F.smooth_l1_loss(a, b, beta=1.0)


def code_regularizer(z: torch.Tensor) -> torch.Tensor:
    """Mean squared deviation of a latent stack from the zero vector."""
    return (z * z).mean()


def _rows(code) -> torch.Tensor:
    return code.rows if isinstance(code, ExtendedLatent) else torch.as_tensor(code)


def path1_terms(x: torch.Tensor, x_recon: torch.Tensor, z_e, cfg: EncoderConfig,
                backbone, weights, embedder) -> dict:
    """Individual reconstruction-loss terms (unweighted), for logging."""
    if x.shape != x_recon.shape:
        raise InvalidArgumentError(
            f"reconstruction shape {tuple(x_recon.shape)} differs from input {tuple(x.shape)}")
    terms = {
        "l2": F.mse_loss(x_recon, x),
        "lpips": lpips(x_recon, x, backbone, weights).mean(),
    }
    z_rows = _rows(z_e)
    terms["reg"] = code_regularizer(z_rows) if cfg.reg_weight > 0 \
        else torch.zeros((), dtype=x.dtype)
    terms["iden"] = identity_distance(x_recon, x, embedder).mean() \
        if cfg.identity_weight > 0 else torch.zeros((), dtype=x.dtype)
    return terms


def path1_loss(x: torch.Tensor, x_recon: torch.Tensor, z_e, cfg: EncoderConfig,
               backbone, weights, embedder) -> torch.Tensor:
    """Real-photo reconstruction objective (weighted sum of the four terms)."""
    t = path1_terms(x, x_recon, z_e, cfg, backbone, weights, embedder)
    total = (cfg.l2_weight * t["l2"] + cfg.lpips_weight * t["lpips"]
             + cfg.reg_weight * t["reg"] + cfg.identity_weight * t["iden"])
    if not torch.isfinite(total.detach()):
        raise NumericFailureError("reconstruction loss is non-finite")
    return total


def path2_loss(z_o, z_e, x_syn: torch.Tensor, x_recon: torch.Tensor, cfg: EncoderConfig,
               backbone, weights, embedder) -> torch.Tensor:
    """Cycle-path objective: reconstruction of the synthesized image plus
    latent prediction against the originally sampled stack."""
    zo = _rows(z_o)
    ze = _rows(z_e)
    if zo.shape != ze.shape:
        raise InvalidArgumentError(
            f"latent stacks differ in shape: {tuple(zo.shape)} vs {tuple(ze.shape)}")
    recon = path1_loss(x_syn, x_recon, z_e, cfg, backbone, weights, embedder)
    return cfg.path1_weight * recon + cfg.z_predict_weight * smooth_l1(zo, ze)
