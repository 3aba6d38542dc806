"""Few-shot decoder adaptation loop.

Starts from a deep copy of the source generator with its mapping network
frozen, then alternates anchor-region and free adversarial batches 1:1
across steps while applying the contrastive and style-structure losses to a
fresh standard-normal batch every step. The source generator is never
touched; only the target's synthesis parameters are optimized.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from ..checkpoint import save_generator
from ..errors import InvalidArgumentError
from ..generator import Generator, clone_for_adaptation
from ..latent import repeat_batch, stage_generator
from .discriminators import DiscriminatorPair, adversarial_losses
from .losses import AdaptationConfig, cdt_loss, cdt_variant_loss, distance_matrix, \
    decoder_total_loss, kl_adain_loss

log = logging.getLogger(__name__)

FEW_SHOT_LIMIT = 10


def sample_anchor_batch(anchors: torch.Tensor, count: int, sigma: float,
                        rng: torch.Generator) -> torch.Tensor:
    """Draw `count` codes from the anchor region: anchor_k + sigma * noise."""
    idx = torch.randint(0, anchors.shape[0], (count,), generator=rng)
    noise = torch.randn(count, anchors.shape[1], generator=rng)
    return anchors[idx] + sigma * noise


class _LossLog:
    def __init__(self, path: Path | None):
        self.path = path
        self._fh = open(path, "w") if path is not None else None

    def write(self, record: dict):
        if self._fh is not None:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def adapt(source: Generator, target_images: torch.Tensor, cfg: AdaptationConfig, *,
          backbone, perceptual_weights, seed: int = 0,
          discriminators: DiscriminatorPair | None = None,
          out_dir=None, allow_oversized: bool = False) -> Generator:
    """Adapt the source generator to the few target images; returns the target.

    Emits one structured loss record per step plus periodic checkpoints and
    sample grids into `out_dir` when given. The source parameters and the
    target's mapping network stay bitwise constant throughout.
    """
    cfg.validate()
    if target_images.dim() != 4 or target_images.shape[0] < 1:
        raise InvalidArgumentError("target images must be a non-empty (N, C, H, W) batch")
    if target_images.shape[0] > FEW_SHOT_LIMIT and not allow_oversized:
        raise InvalidArgumentError(
            f"few-shot adaptation takes at most {FEW_SHOT_LIMIT} target images, "
            f"got {target_images.shape[0]} (pass allow_oversized to override)"
        )
    if target_images.shape[2] != source.resolution or target_images.shape[3] != source.resolution:
        raise InvalidArgumentError(
            f"target images are {target_images.shape[2]}x{target_images.shape[3]}, "
            f"generator expects {source.resolution}x{source.resolution}"
        )
    if target_images.shape[1] != source.img_channels:
        raise InvalidArgumentError(
            f"target images have {target_images.shape[1]} channels, "
            f"generator outputs {source.img_channels}"
        )

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    source.eval()
    for p in source.parameters():
        p.requires_grad_(False)

    target = clone_for_adaptation(source)
    for p in target.synthesis_parameters():
        p.requires_grad_(True)

    if discriminators is None:
        discriminators = DiscriminatorPair(
            source.resolution, img_channels=source.img_channels,
            seed=stage_seed_int(seed, "adapt.discriminators"),
        )

    opt_g = torch.optim.Adam(target.synthesis_parameters(),
                             lr=cfg.learning_rate, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(discriminators.parameters(),
                             lr=cfg.learning_rate, betas=cfg.adam_betas)

    rng = stage_generator(seed, "adapt.latents")
    anchors = torch.randn(cfg.anchor_count, source.latent_dim,
                          generator=stage_generator(seed, "adapt.anchors"))

    loss_log = _LossLog(out_dir / "loss_log.jsonl" if out_dir is not None else None)
    m = cfg.batch_size
    d_updates = {id(discriminators.image): 0, id(discriminators.patch): 0}

    try:
        for step in range(cfg.iterations):
            anchored = step % 2 == 0
            if anchored:
                z_adv = sample_anchor_batch(anchors, m, cfg.anchor_sigma, rng)
                critic = discriminators.image
            else:
                z_adv = torch.randn(m, source.latent_dim, generator=rng)
                critic = discriminators.patch
            mask = torch.full((m,), anchored, dtype=torch.bool)

            zplus_adv = _maybe_style_mix(z_adv, target.num_layers, cfg.style_mixing_prob, rng)
            d_updates[id(critic)] += 1
            lazy_r1 = cfg.r1_gamma * cfg.r1_interval \
                if cfg.r1_gamma > 0 and d_updates[id(critic)] % cfg.r1_interval == 0 else 0.0
            adv = adversarial_losses(target, discriminators, zplus_adv, mask,
                                     target_images, r1_gamma=lazy_r1)

            z_con = torch.randn(m, source.latent_dim, generator=rng)
            zplus_con = repeat_batch(z_con, source.num_layers)
            with torch.no_grad():
                x_src, trace_src = source(zplus_con)
            x_tgt, trace_tgt = target(zplus_con)

            if cfg.cdt_variant == "cdt":
                dmat = distance_matrix(x_src, x_tgt, backbone, perceptual_weights)
                cdt = cdt_loss(dmat, cfg.margin, cfg.positive_weight)
            else:
                cdt = cdt_variant_loss(cfg.cdt_variant, source, target, z_con,
                                       backbone, perceptual_weights,
                                       cfg.margin, cfg.positive_weight, rng=rng)
            kl = kl_adain_loss(trace_src.detach(), trace_tgt)
            total = decoder_total_loss(adv.g_loss, cdt, kl, cfg)

            opt_g.zero_grad(set_to_none=True)
            opt_d.zero_grad(set_to_none=True)
            total.backward()
            opt_d.zero_grad(set_to_none=True)  # discard generator-phase grads on the critics
            opt_g.step()

            adv.d_loss.backward()
            opt_d.step()

            loss_log.write({
                "step": step,
                "adv": float(adv.g_loss.detach()),
                "cdt": float(cdt.detach()),
                "kl_adain": float(kl.detach()),
                "total": float(total.detach()),
                "d_loss": float(adv.d_loss.detach()),
            })
            if cfg.checkpoint_interval and out_dir is not None \
                    and (step + 1) % cfg.checkpoint_interval == 0:
                save_generator(out_dir / f"decoder_{step + 1:06d}.ckpt", target)
            if cfg.sample_interval and out_dir is not None \
                    and (step + 1) % cfg.sample_interval == 0:
                _emit_sample_grid(target, cfg.sample_count, seed,
                                  out_dir / f"samples_{step + 1:06d}.png")
            if step % 50 == 0:
                log.info("step %d adv=%.4f cdt=%.4f kl=%.6f total=%.4f",
                         step, float(adv.g_loss.detach()), float(cdt.detach()),
                         float(kl.detach()), float(total.detach()))
    finally:
        loss_log.close()

    return target


def _maybe_style_mix(z: torch.Tensor, n: int, prob: float, rng: torch.Generator) -> torch.Tensor:
    zplus = repeat_batch(z, n)
    if prob <= 0:
        return zplus
    if float(torch.rand((), generator=rng)) < prob:
        z2 = torch.randn(z.shape, dtype=z.dtype, generator=rng)
        cutoff = int(torch.randint(1, n, (), generator=rng))
        zplus = zplus.clone()
        zplus[:, cutoff:, :] = z2.unsqueeze(1)
    return zplus


def _emit_sample_grid(generator: Generator, count: int, seed: int, path: Path):
    from ..dataset import save_grid

    rng = stage_generator(seed, "adapt.samples")
    z = torch.randn(count, generator.latent_dim, generator=rng)
    with torch.no_grad():
        imgs, _ = generator(repeat_batch(z, generator.num_layers))
    save_grid(imgs, path)


def stage_seed_int(seed: int, stage: str) -> int:
    from ..latent import stage_seed

    return stage_seed(seed, stage) % (2**31)
