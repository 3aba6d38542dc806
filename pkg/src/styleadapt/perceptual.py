"""Feature backbones and the perceptual / identity distances built on them.

A backbone maps an image batch to an ordered list of K feature maps (taps).
Distances never depend on downloaded weights: the default backbone is a
small fixed-seed convolutional stack, and an adapter can restore externally
converted classifier weights from the repo checkpoint container instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgumentError, NumericFailureError

NORM_EPS = 1e-10
OMITTED_TAP_INDEX = 3  # 4th tap, 1-based


@dataclass(frozen=True)
class PerceptualWeights:
    """Nonnegative per-tap weights; at least one must be positive."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise InvalidArgumentError("weights must cover at least one tap")
        if any(w < 0 for w in self.values):
            raise InvalidArgumentError(f"tap weights must be >= 0, got {self.values}")
        if all(w == 0 for w in self.values):
            raise InvalidArgumentError("at least one tap weight must be > 0")

    @classmethod
    def uniform(cls, num_taps: int) -> "PerceptualWeights":
        return cls(tuple(1.0 for _ in range(num_taps)))

    def with_tap_zeroed(self, index: int) -> "PerceptualWeights":
        vals = list(self.values)
        vals[index] = 0.0
        return PerceptualWeights(tuple(vals))

    def __len__(self) -> int:
        return len(self.values)


class ToyBackbone(nn.Module):
    """Fixed-seed random convolutional stack with 5 taps.

    Parameters are frozen at construction; outputs are deterministic per
    input. Spatial size halves before taps 3 and 5, so inputs as small as
    4x4 still produce all taps.
    """

    def __init__(self, in_channels: int = 3, channels: tuple[int, ...] = (8, 16, 24, 32, 32),
                 downsample_before: tuple[int, ...] = (2, 4), seed: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.downsample_before = tuple(downsample_before)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            convs = []
            prev = in_channels
            for ch in channels:
                convs.append(nn.Conv2d(prev, ch, 3, padding=1))
                prev = ch
            self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def num_taps(self) -> int:
        return len(self.convs)

    @property
    def tap_channels(self) -> tuple[int, ...]:
        return self.channels

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise InvalidArgumentError(
                f"backbone expects (B, {self.in_channels}, H, W), got shape {tuple(x.shape)}"
            )
        taps = []
        for i, conv in enumerate(self.convs):
            if i in self.downsample_before and min(x.shape[2], x.shape[3]) >= 2:
                x = F.avg_pool2d(x, 2)
            x = F.leaky_relu(conv(x), 0.2)
            taps.append(x)
        return taps

    def meta(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "channels": list(self.channels),
            "downsample_before": list(self.downsample_before),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ToyBackbone":
        return cls(in_channels=meta["in_channels"], channels=tuple(meta["channels"]),
                   downsample_before=tuple(meta["downsample_before"]))


class ToyIdentityEmbedder(nn.Module):
    """Fixed random projection of downsampled pixels, L2-normalized.

    Stands in for a pretrained face-identity network; the distance contract
    only needs a deterministic unit-norm embedding.
    """

    def __init__(self, in_channels: int = 3, embed_dim: int = 64, pool_size: int = 8, seed: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.embed_dim = embed_dim
        self.pool_size = pool_size
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.proj = nn.Linear(in_channels * pool_size * pool_size, embed_dim, bias=False)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise InvalidArgumentError(
                f"embedder expects (B, {self.in_channels}, H, W), got shape {tuple(x.shape)}"
            )
        pooled = F.adaptive_avg_pool2d(x, self.pool_size).flatten(1)
        emb = self.proj(pooled)
        norm = emb.norm(dim=1, keepdim=True)
        if (norm.detach() < 1e-12).any():
            raise NumericFailureError("identity embedding has zero norm")
        return emb / norm


def _normalize_channels(feat: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt((feat * feat).sum(dim=1, keepdim=True))
    return feat / (norm + NORM_EPS)


def _check_pair(x: torch.Tensor, y: torch.Tensor):
    if x.shape != y.shape:
        raise InvalidArgumentError(f"image shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() != 4:
        raise InvalidArgumentError(f"expected (B, C, H, W) batches, got shape {tuple(x.shape)}")


def lpips(x: torch.Tensor, y: torch.Tensor, backbone, weights: PerceptualWeights) -> torch.Tensor:
    """Weighted perceptual distance between two image batches, per sample.

    For each tap the features are unit-normalized along channels at every
    spatial location; the squared difference is summed over channels,
    averaged over space, and the per-tap results are combined with the
    given nonnegative weights. Symmetric, nonnegative, zero on identical
    inputs.
    """
    _check_pair(x, y)
    feats_x = backbone(x)
    feats_y = backbone(y)
    if len(weights) != len(feats_x):
        raise InvalidArgumentError(
            f"got {len(weights)} weights for a backbone with {len(feats_x)} taps"
        )
    total = torch.zeros(x.shape[0], dtype=x.dtype, device=x.device)
    for w, fx, fy in zip(weights.values, feats_x, feats_y):
        if w == 0:
            continue
        diff = _normalize_channels(fx) - _normalize_channels(fy)
        total = total + w * (diff * diff).sum(dim=1).mean(dim=(1, 2))
    return total


def modified_lpips(x: torch.Tensor, y: torch.Tensor, backbone, weights: PerceptualWeights) -> torch.Tensor:
    """lpips with the 4th tap (1-based) excluded; requires >= 5 taps."""
    if len(weights) < 5:
        raise InvalidArgumentError(
            f"modified perceptual distance needs >= 5 taps, got {len(weights)}"
        )
    return lpips(x, y, backbone, weights.with_tap_zeroed(OMITTED_TAP_INDEX))


def identity_distance(x: torch.Tensor, y: torch.Tensor, embedder) -> torch.Tensor:
    """1 - cosine similarity of the identity embeddings, per sample; range [0, 2]."""
    _check_pair(x, y)
    ex = embedder(x)
    ey = embedder(y)
    nx = ex.norm(dim=1)
    ny = ey.norm(dim=1)
    if (nx.detach() < 1e-12).any() or (ny.detach() < 1e-12).any():
        raise NumericFailureError("identity embedding has zero norm")
    cos = (ex * ey).sum(dim=1) / (nx * ny)
    return 1.0 - cos


def pairwise_lpips(x: torch.Tensor, y: torch.Tensor, backbone, weights: PerceptualWeights) -> torch.Tensor:
    """All-pairs lpips between rows of x and rows of y, as an (mx, my) matrix.

    Features are extracted once per batch and reused across pairs; row i of
    the result matches lpips(x[i:i+1].expand(...), y) exactly.
    """
    if x.dim() != 4 or y.dim() != 4 or x.shape[1:] != y.shape[1:]:
        raise InvalidArgumentError(
            f"pairwise distance needs batches of equal image shape, got {tuple(x.shape)} vs {tuple(y.shape)}"
        )
    feats_x = [_normalize_channels(f) for f in backbone(x)]
    feats_y = [_normalize_channels(f) for f in backbone(y)]
    if len(weights) != len(feats_x):
        raise InvalidArgumentError(
            f"got {len(weights)} weights for a backbone with {len(feats_x)} taps"
        )
    mx, my = x.shape[0], y.shape[0]
    rows = []
    for i in range(mx):
        row = torch.zeros(my, dtype=x.dtype, device=x.device)
        for w, fx, fy in zip(weights.values, feats_x, feats_y):
            if w == 0:
                continue
            diff = fx[i].unsqueeze(0) - fy
            row = row + w * (diff * diff).sum(dim=1).mean(dim=(1, 2))
        rows.append(row)
    return torch.stack(rows, dim=0)


def pairwise_modified_lpips(x: torch.Tensor, y: torch.Tensor, backbone,
                            weights: PerceptualWeights) -> torch.Tensor:
    """All-pairs modified lpips (4th tap excluded)."""
    if len(weights) < 5:
        raise InvalidArgumentError(
            f"modified perceptual distance needs >= 5 taps, got {len(weights)}"
        )
    return pairwise_lpips(x, y, backbone, weights.with_tap_zeroed(OMITTED_TAP_INDEX))
