"""Procedural colored-shape image domains for desk-scale runs.

Two visually distinct synthetic domains stand in for photo and artistic
data in demos and self-tests: domain "blobs" draws soft colored circles on
dark gradients, domain "tiles" draws bright axis-aligned squares with ring
outlines on light backgrounds. Everything is deterministic per seed.
"""

from __future__ import annotations

import numpy as np
import torch

from .dataset import save_image
from .errors import InvalidArgumentError

DOMAINS = ("blobs", "tiles")


def _grid(resolution: int):
    axis = np.linspace(-1.0, 1.0, resolution, dtype=np.float32)
    return np.meshgrid(axis, axis, indexing="xy")


def _blob_image(rng: np.random.Generator, resolution: int) -> np.ndarray:
    xx, yy = _grid(resolution)
    base = rng.uniform(-0.9, -0.4)
    tilt = rng.uniform(-0.3, 0.3, size=2)
    img = np.stack([base + tilt[0] * xx + tilt[1] * yy] * 3, axis=0)
    for _ in range(rng.integers(2, 4)):
        cx, cy = rng.uniform(-0.6, 0.6, size=2)
        radius = rng.uniform(0.25, 0.5)
        color = rng.uniform(-0.2, 0.9, size=3)
        dist2 = (xx - cx) ** 2 + (yy - cy) ** 2
        mask = np.exp(-dist2 / (2 * (radius / 2) ** 2))
        img += color[:, None, None] * mask[None]
    return np.clip(img, -1.0, 1.0)


def _tile_image(rng: np.random.Generator, resolution: int) -> np.ndarray:
    xx, yy = _grid(resolution)
    base = rng.uniform(0.4, 0.9)
    img = np.stack([np.full_like(xx, base), np.full_like(xx, base * 0.9),
                    np.full_like(xx, rng.uniform(0.2, 0.6))], axis=0)
    for _ in range(rng.integers(2, 4)):
        cx, cy = rng.uniform(-0.5, 0.5, size=2)
        half = rng.uniform(0.15, 0.4)
        color = rng.uniform(-1.0, 0.2, size=3)
        box = (np.abs(xx - cx) < half) & (np.abs(yy - cy) < half)
        ring = (np.abs(xx - cx) < half * 1.25) & (np.abs(yy - cy) < half * 1.25) & ~box
        img = np.where(box[None], color[:, None, None], img)
        img = np.where(ring[None], -np.ones((3, 1, 1), dtype=np.float32), img)
    return np.clip(img, -1.0, 1.0)


def shape_domain(kind: str, count: int, resolution: int, seed: int = 0) -> torch.Tensor:
    """Generate a (count, 3, R, R) batch of domain images in [-1, 1]."""
    if kind not in DOMAINS:
        raise InvalidArgumentError(f"unknown domain {kind!r}; expected one of {DOMAINS}")
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    draw = _blob_image if kind == "blobs" else _tile_image
    batch = np.stack([draw(rng, resolution) for _ in range(count)])
    return torch.from_numpy(batch.astype(np.float32))


def write_domain_folder(folder, kind: str, count: int, resolution: int, seed: int = 0):
    """Materialize a domain as numbered PNG files (for CLI smoke runs)."""
    images = shape_domain(kind, count, resolution, seed)
    for i in range(count):
        save_image(images[i], f"{folder}/{kind}_{i:04d}.png")
    return images
