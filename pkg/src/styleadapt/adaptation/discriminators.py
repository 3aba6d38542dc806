"""Image-level and patch-level discriminators plus the adversarial objective.

Few-shot adversarial supervision is split: latents drawn from the anchor
region (small neighborhoods of a fixed set of codes) are scored by the
full-image discriminator, all other latents only by the patch discriminator,
which limits how much the image-level critic can overfit the handful of
real examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import InvalidArgumentError
from ..latent import repeat_batch


class ImageDiscriminator(nn.Module):
    """Downsampling conv stack ending in one logit per image."""

    def __init__(self, resolution: int, img_channels: int = 3,
                 base_channels: int = 32, max_channels: int = 256):
        super().__init__()
        self.resolution = resolution
        layers = [nn.Conv2d(img_channels, base_channels, 3, padding=1),
                  nn.LeakyReLU(0.2)]
        ch = base_channels
        size = resolution
        while size > 4:
            nxt = min(max_channels, ch * 2)
            layers += [nn.Conv2d(ch, nxt, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            ch = nxt
            size //= 2
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(ch * 4 * 4, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.body(x)
        return self.head(h.flatten(1)).squeeze(1)


class PatchDiscriminator(nn.Module):
    """Conv stack stopping at a spatial grid of logits (>= 4x4 per image)."""

    def __init__(self, resolution: int, img_channels: int = 3,
                 base_channels: int = 32, max_channels: int = 256,
                 grid: int | None = None):
        super().__init__()
        self.resolution = resolution
        self.grid = grid if grid is not None else max(4, resolution // 8)
        if self.grid < 4 or self.grid > resolution // 2:
            raise InvalidArgumentError(
                f"patch grid must be in [4, {resolution // 2}], got {self.grid}"
            )
        downs = int(math.log2(resolution // self.grid))
        layers = [nn.Conv2d(img_channels, base_channels, 3, padding=1),
                  nn.LeakyReLU(0.2)]
        ch = base_channels
        for _ in range(downs):
            nxt = min(max_channels, ch * 2)
            layers += [nn.Conv2d(ch, nxt, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            ch = nxt
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(ch, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x))  # (B, 1, grid, grid)


class DiscriminatorPair(nn.Module):
    """The two critics used during adaptation, checkpointable as one unit."""

    def __init__(self, resolution: int, img_channels: int = 3,
                 base_channels: int = 32, max_channels: int = 256,
                 patch_grid: int | None = None, seed: int | None = None):
        super().__init__()
        self.resolution = resolution
        self.img_channels = img_channels
        self.base_channels = base_channels
        self.max_channels = max_channels
        if seed is not None:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self.image = ImageDiscriminator(resolution, img_channels, base_channels, max_channels)
                self.patch = PatchDiscriminator(resolution, img_channels, base_channels,
                                                max_channels, patch_grid)
        else:
            self.image = ImageDiscriminator(resolution, img_channels, base_channels, max_channels)
            self.patch = PatchDiscriminator(resolution, img_channels, base_channels,
                                            max_channels, patch_grid)

    def meta(self) -> dict:
        return {
            "resolution": self.resolution,
            "img_channels": self.img_channels,
            "base_channels": self.base_channels,
            "max_channels": self.max_channels,
            "patch_grid": self.patch.grid,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "DiscriminatorPair":
        return cls(resolution=meta["resolution"], img_channels=meta["img_channels"],
                   base_channels=meta["base_channels"], max_channels=meta["max_channels"],
                   patch_grid=meta["patch_grid"])


@dataclass
class AdversarialResult:
    g_loss: torch.Tensor
    d_loss: torch.Tensor
    anchor_count: int
    free_count: int


def _per_image(logits: torch.Tensor) -> torch.Tensor:
    """Reduce patch logits to one value per image; pass image logits through."""
    if logits.dim() == 1:
        return logits
    return logits.flatten(1).mean(dim=1)


def _softplus_per_image(logits: torch.Tensor, sign: float) -> torch.Tensor:
    flat = logits if logits.dim() == 1 else logits.flatten(1)
    val = F.softplus(sign * flat)
    return val if val.dim() == 1 else val.mean(dim=1)


def _r1_penalty(discriminator, real: torch.Tensor) -> torch.Tensor:
    real = real.detach().requires_grad_(True)
    logits = _per_image(discriminator(real))
    (grad,) = torch.autograd.grad(logits.sum(), real, create_graph=True)
    return grad.pow(2).flatten(1).sum(dim=1).mean()


def adversarial_losses(target_gen, discriminators: DiscriminatorPair,
                       z_batch: torch.Tensor, anchor_mask: torch.Tensor,
                       real_images: torch.Tensor, r1_gamma: float = 0.0) -> AdversarialResult:
    """Non-saturating GAN losses with per-sample discriminator routing.

    Each latent in `z_batch` was drawn either inside the anchor region
    (anchor_mask true: scored by the image discriminator) or freely
    (scored by the patch discriminator); every sample is scored by exactly
    one of the two. The discriminator loss adds real terms for each critic
    that saw fakes this step, plus an optional R1 gradient penalty on the
    real images (pass the lazy-regularization-compensated gamma).
    """
    if real_images.numel() == 0 or real_images.shape[0] == 0:
        raise InvalidArgumentError("adversarial loss needs at least one real image")
    if z_batch.dim() == 2:
        zplus = repeat_batch(z_batch, target_gen.num_layers)
    elif z_batch.dim() == 3:
        zplus = z_batch
    else:
        raise InvalidArgumentError(
            f"expected a (B, dim) or (B, n, dim) latent batch, got {tuple(z_batch.shape)}"
        )
    if anchor_mask.shape != (z_batch.shape[0],):
        raise InvalidArgumentError("anchor mask must have one flag per latent")

    fake, _ = target_gen(zplus, capture_trace=False)

    g_terms = []
    d_fake_terms = []
    d_real_terms = []
    sides = []
    if bool(anchor_mask.any()):
        sides.append((discriminators.image, fake[anchor_mask]))
    if bool((~anchor_mask).any()):
        sides.append((discriminators.patch, fake[~anchor_mask]))
    for critic, fakes in sides:
        g_terms.append(_softplus_per_image(critic(fakes), -1.0))
        d_fake_terms.append(_softplus_per_image(critic(fakes.detach()), +1.0))
        d_real_terms.append(_softplus_per_image(critic(real_images), -1.0).mean())

    g_loss = torch.cat(g_terms).mean()
    d_loss = torch.cat(d_fake_terms).mean() + torch.stack(d_real_terms).mean()
    if r1_gamma > 0:
        penalties = [_r1_penalty(critic, real_images) for critic, _ in sides]
        d_loss = d_loss + (r1_gamma / 2.0) * torch.stack(penalties).mean()

    return AdversarialResult(
        g_loss=g_loss, d_loss=d_loss,
        anchor_count=int(anchor_mask.sum()), free_count=int((~anchor_mask).sum()),
    )
