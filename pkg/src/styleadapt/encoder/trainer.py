"""Encoder training: reconstruction-only stage, then dual-path.

The paired decoder stays frozen throughout (its parameters are excluded
from the optimizer and gradient); in the dual phase, reconstruction batches
and sample-decode-encode cycle batches alternate 1:1. Cycle-path gradients
stop at the decoder boundary: the synthesized image is produced without
grad, only the re-encoding and the differentiable decode of the predicted
stack carry gradient.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from ..checkpoint import save_encoder
from ..errors import InvalidArgumentError
from ..generator import Generator
from ..latent import repeat_batch, stage_generator
from .losses import EncoderConfig, path1_terms, path2_loss, smooth_l1
from .network import Encoder

log = logging.getLogger(__name__)


def _dataset_tensor(dataset) -> torch.Tensor:
    if torch.is_tensor(dataset):
        images = dataset
    elif hasattr(dataset, "images"):
        images = dataset.images
    else:
        raise InvalidArgumentError(
            "dataset must be an image tensor or expose an `images` tensor")
    if images.dim() != 4 or images.shape[0] == 0:
        raise InvalidArgumentError("dataset must be a non-empty (N, C, H, W) tensor")
    return images


def train_encoder(dataset, decoder: Generator, cfg: EncoderConfig, *,
                  backbone, perceptual_weights, embedder, seed: int = 0,
                  initial: Encoder | None = None, out_dir=None) -> Encoder:
    """Train (or continue training) an encoder against a frozen decoder."""
    cfg.validate()
    images = _dataset_tensor(dataset)
    if images.shape[2] != decoder.resolution or images.shape[3] != decoder.resolution:
        raise InvalidArgumentError(
            f"dataset images are {images.shape[2]}x{images.shape[3]}, decoder expects "
            f"{decoder.resolution}x{decoder.resolution}"
        )

    decoder.eval()
    for p in decoder.parameters():
        p.requires_grad_(False)

    if initial is None:
        encoder = Encoder(
            resolution=decoder.resolution, latent_dim=decoder.latent_dim,
            img_channels=decoder.img_channels,
            seed=stage_generator(seed, "encoder.init").initial_seed() % (2**31),
        )
    else:
        encoder = initial
        if encoder.resolution != decoder.resolution or encoder.latent_dim != decoder.latent_dim:
            raise InvalidArgumentError("initial encoder does not match the decoder")

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "encoder_log.jsonl", "w")

    opt = torch.optim.Adam(encoder.parameters(), lr=cfg.learning_rate)
    data_rng = stage_generator(seed, "encoder.data")
    z_rng = stage_generator(seed, "encoder.path2")
    n = decoder.num_layers

    def emit(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()

    def path1_step(step: int):
        idx = torch.randint(0, images.shape[0], (min(cfg.batch_size, images.shape[0]),),
                            generator=data_rng)
        x = images[idx]
        z_e = encoder(x)
        x_recon, _ = decoder(z_e, capture_trace=False)
        terms = path1_terms(x, x_recon, z_e, cfg, backbone, perceptual_weights, embedder)
        loss = (cfg.l2_weight * terms["l2"] + cfg.lpips_weight * terms["lpips"]
                + cfg.reg_weight * terms["reg"] + cfg.identity_weight * terms["iden"])
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        emit({"step": step, "path": "path1",
              **{k: float(v.detach()) for k, v in terms.items()},
              "total": float(loss.detach())})

    def path2_step(step: int):
        z = torch.randn(cfg.batch_size, decoder.latent_dim, generator=z_rng)
        z_o = repeat_batch(z, n)
        with torch.no_grad():
            x_syn, _ = decoder(z_o, capture_trace=False)
        z_e = encoder(x_syn)
        x_recon, _ = decoder(z_e, capture_trace=False)
        loss = path2_loss(z_o, z_e, x_syn, x_recon, cfg, backbone,
                          perceptual_weights, embedder)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        emit({"step": step, "path": "path2",
              "z_predict": float(smooth_l1(z_o, z_e).detach()),
              "total": float(loss.detach())})

    step = 0
    for _ in range(cfg.stage1_iterations):
        path1_step(step)
        step += 1
    for i in range(cfg.dual_path_iterations):
        if i % 2 == 0:
            path1_step(step)
        else:
            path2_step(step)
        step += 1
        if cfg.checkpoint_interval and out_dir is not None \
                and step % cfg.checkpoint_interval == 0:
            save_encoder(out_dir / f"encoder_{step:06d}.ckpt", encoder)

    if log_fh is not None:
        log_fh.close()
    return encoder
