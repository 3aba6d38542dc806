"""Decoder-adaptation losses.

The contrastive term works on an m x m matrix of modified perceptual
distances between source generations (rows) and target generations
(columns): the diagonal holds same-latent cross-domain distances, the
off-diagonal row means hold different-latent cross-domain distances. A
second term matches, per layer, the softmax-normalized pairwise cosine
structure of the AdaIN style inputs between source and target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..errors import InvalidArgumentError, NumericFailureError
from ..generator import AdaINInputTrace
from ..latent import repeat_batch
from ..perceptual import pairwise_modified_lpips

CDT_VARIANTS = ("d_plus_only", "noised_cdt", "in_domain")
VARIANT_NOISE_VARIANCE = 0.1


@dataclass
class AdaptationConfig:
    """Hyper-parameters of the decoder-adaptation stage.

    Defaults are the full-scale 10-shot recipe for cartoon-like domains;
    desk-scale tests override sizes and iteration counts. The contrastive
    batch size must be >= 3: with only two samples the per-sample softmax
    in the style-structure loss degenerates to a point mass.
    """

    adv_weight: float = 1.0
    cdt_weight: float = 0.005
    kl_adain_weight: float = 1000.0
    margin: float = 2.0
    positive_weight: float = 2.0
    batch_size: int = 8
    iterations: int = 1000
    learning_rate: float = 0.002
    anchor_count: int = 10
    anchor_sigma: float = 0.05
    adam_betas: tuple = (0.0, 0.99)
    r1_gamma: float = 10.0
    r1_interval: int = 16
    cdt_variant: str = "cdt"
    style_mixing_prob: float = 0.0
    checkpoint_interval: int = 0
    sample_interval: int = 0
    sample_count: int = 16

    def validate(self):
        if self.batch_size < 3:
            raise InvalidArgumentError(
                f"batch size must be >= 3, got {self.batch_size}"
            )
        for name in ("adv_weight", "cdt_weight", "kl_adain_weight"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.positive_weight < 1.0:
            raise InvalidArgumentError(
                f"positive_weight must be >= 1, got {self.positive_weight}"
            )
        if self.cdt_variant not in ("cdt",) + CDT_VARIANTS:
            raise InvalidArgumentError(f"unknown cdt_variant {self.cdt_variant!r}")
        if self.anchor_count < 1:
            raise InvalidArgumentError("anchor_count must be >= 1")


@dataclass
class DistanceMatrix:
    """m x m nonnegative distances, source generations against target ones."""

    values: torch.Tensor

    def __post_init__(self):
        v = self.values
        if v.dim() != 2 or v.shape[0] != v.shape[1]:
            raise InvalidArgumentError(f"distance matrix must be square, got {tuple(v.shape)}")
        if v.shape[0] < 2:
            raise InvalidArgumentError(f"distance matrix needs m >= 2, got m={v.shape[0]}")
        if (v.detach() < 0).any():
            raise InvalidArgumentError("distances must be nonnegative")

    @property
    def m(self) -> int:
        return self.values.shape[0]


def distance_matrix(source_images: torch.Tensor, target_images: torch.Tensor,
                    backbone, weights) -> DistanceMatrix:
    """Modified perceptual distances between all source/target image pairs."""
    if source_images.shape != target_images.shape:
        raise InvalidArgumentError(
            f"batches must have equal shape, got {tuple(source_images.shape)} vs {tuple(target_images.shape)}"
        )
    return DistanceMatrix(pairwise_modified_lpips(source_images, target_images, backbone, weights))


def triplet_loss(d_ap, d_an, margin: float):
    """Hinge on anchor-positive vs anchor-negative distances: max(d_ap - d_an + margin, 0)."""
    d_ap_t = torch.as_tensor(d_ap)
    d_an_t = torch.as_tensor(d_an)
    if (d_ap_t.detach() < 0).any() or (d_an_t.detach() < 0).any():
        raise InvalidArgumentError("triplet distances must be nonnegative")
    out = torch.clamp(d_ap_t - d_an_t + margin, min=0.0)
    if not torch.is_tensor(d_ap) and not torch.is_tensor(d_an):
        return float(out)
    return out


def _as_square(distances) -> torch.Tensor:
    if isinstance(distances, DistanceMatrix):
        return distances.values
    d = torch.as_tensor(distances)
    DistanceMatrix(d)  # reuse the shape / sign validation
    return d


def cdt_loss(distances, margin: float, positive_weight: float = 1.0) -> torch.Tensor:
    """Cross-domain triplet loss over a distance matrix.

    Per sample i the positive distance is the diagonal entry (same latent,
    source vs target) weighted by `positive_weight`, the negative distance
    is the mean off-diagonal entry of row i; the hinge with `margin` is
    averaged over the batch. positive_weight=1 is the unweighted form.
    """
    d = _as_square(distances)
    m = d.shape[0]
    diag = d.diagonal()
    neg_mean = (d.sum(dim=1) - diag) / (m - 1)
    per_sample = torch.clamp(positive_weight * diag - neg_mean + margin, min=0.0)
    return per_sample.mean()


def cdt_variant_loss(variant: str, source_gen, target_gen, z: torch.Tensor,
                     backbone, weights, margin: float, positive_weight: float = 1.0,
                     noise: torch.Tensor | None = None,
                     rng: torch.Generator | None = None) -> torch.Tensor:
    """Ablation variants of the contrastive term.

    d_plus_only: mean same-latent source/target distance, no hinge.
    noised_cdt:  the positive becomes the target generation of a perturbed
                 latent z + delta, delta ~ N(0, 0.1 I).
    in_domain:   anchor / positive / negative all come from the target
                 generator (z_i, z_i + delta, z_j).
    """
    if variant not in CDT_VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}; expected one of {CDT_VARIANTS}")
    if z.dim() != 2 or z.shape[0] < 2:
        raise InvalidArgumentError(f"need a (m >= 2, dim) latent batch, got {tuple(z.shape)}")
    m = z.shape[0]
    n = target_gen.num_layers

    def gen(g, codes, grad: bool):
        zp = repeat_batch(codes, n)
        if grad:
            return g(zp, capture_trace=False)[0]
        with torch.no_grad():
            return g(zp, capture_trace=False)[0]

    if variant == "d_plus_only":
        xs = gen(source_gen, z, grad=False)
        xt = gen(target_gen, z, grad=True)
        d = pairwise_modified_lpips(xs, xt, backbone, weights)
        return d.diagonal().mean()

    if noise is None:
        noise = math.sqrt(VARIANT_NOISE_VARIANCE) * torch.randn(
            z.shape, dtype=z.dtype, generator=rng
        )
    if noise.shape != z.shape:
        raise InvalidArgumentError(
            f"noise shape {tuple(noise.shape)} must match latent batch {tuple(z.shape)}"
        )

    xt = gen(target_gen, z, grad=True)
    xt_noised = gen(target_gen, z + noise, grad=True)
    if variant == "noised_cdt":
        anchors = gen(source_gen, z, grad=False)
    else:  # in_domain
        anchors = xt
    d_pos = pairwise_modified_lpips(anchors, xt_noised, backbone, weights).diagonal()
    d_all = pairwise_modified_lpips(anchors, xt, backbone, weights)
    neg_mean = (d_all.sum(dim=1) - d_all.diagonal()) / (m - 1)
    per_sample = torch.clamp(positive_weight * d_pos - neg_mean + margin, min=0.0)
    return per_sample.mean()


def _offdiag(mat: torch.Tensor) -> torch.Tensor:
    m = mat.shape[0]
    mask = ~torch.eye(m, dtype=torch.bool, device=mat.device)
    return mat[mask].reshape(m, m - 1)


def _cosine_matrix(rows: torch.Tensor) -> torch.Tensor:
    norms = rows.norm(dim=1)
    if (norms.detach() < 1e-12).any():
        raise NumericFailureError("style-input row with zero norm")
    unit = rows / norms.unsqueeze(1)
    return unit @ unit.t()


def kl_adain_loss(trace_s, trace_t) -> torch.Tensor:
    """Style-structure preservation loss between two AdaIN-input traces.

    For every layer l and sample i, the cosine similarities of sample i's
    style input to all other samples' are softmax-normalized into a
    distribution; the KL divergence from the source distribution to the
    target one is averaged over samples and summed over layers.
    """
    layers_s = trace_s.layers if isinstance(trace_s, AdaINInputTrace) else list(trace_s)
    layers_t = trace_t.layers if isinstance(trace_t, AdaINInputTrace) else list(trace_t)
    if len(layers_s) != len(layers_t):
        raise InvalidArgumentError(
            f"traces cover {len(layers_s)} vs {len(layers_t)} layers"
        )
    if len(layers_s) == 0:
        raise InvalidArgumentError("traces must cover at least one layer")
    m = layers_s[0].shape[0]
    if m < 3:
        raise InvalidArgumentError(
            f"need batch size >= 3 for the pairwise softmax, got {m}"
        )
    total = None
    for fs, ft in zip(layers_s, layers_t):
        if fs.shape[0] != m or ft.shape[0] != m:
            raise InvalidArgumentError("traces have inconsistent batch sizes")
        sim_s = _offdiag(_cosine_matrix(fs))
        sim_t = _offdiag(_cosine_matrix(ft))
        log_ys = F.log_softmax(sim_s, dim=1)
        log_yt = F.log_softmax(sim_t, dim=1)
        kl_per_sample = (log_ys.exp() * (log_ys - log_yt)).sum(dim=1)
        layer_term = kl_per_sample.mean()
        total = layer_term if total is None else total + layer_term
    return total


def decoder_total_loss(adv, cdt, kl_adain, cfg: AdaptationConfig):
    """Weighted sum of the adversarial, contrastive and style-structure terms."""
    parts = [torch.as_tensor(x) for x in (adv, cdt, kl_adain)]
    for name, p in zip(("adv", "cdt", "kl_adain"), parts):
        if not torch.isfinite(p.detach()).all():
            raise NumericFailureError(f"{name} loss is non-finite")
    total = (cfg.adv_weight * parts[0] + cfg.cdt_weight * parts[1]
             + cfg.kl_adain_weight * parts[2])
    if all(not torch.is_tensor(x) for x in (adv, cdt, kl_adain)):
        return float(total)
    return total
