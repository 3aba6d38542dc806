"""Latent-space encoder: pyramid feature extractor plus a sub-encoder.

The extractor produces coarse / mid / fine feature maps; one small conv head
per output slot pools its assigned pyramid level into a latent token
(coarse features feed the early generator layers, fine features the late
ones). The sub-encoder transforms the token sequence into the final stack
of latent rows; the default is a transformer, with single/eight-layer
linear stacks and an attention-only stack selectable for comparisons.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import InvalidArgumentError
from ..latent import ExtendedLatent, layer_count

SUB_ENCODER_KINDS = ("transformer", "linear_1", "linear_8", "attention")


def token_groups(n: int) -> tuple[int, int, int]:
    """Split n output slots into (coarse, mid, fine) pyramid assignments."""
    if n < 1:
        raise InvalidArgumentError(f"need n >= 1 output slots, got {n}")
    if n == 1:
        return (1, 0, 0)
    if n == 2:
        return (1, 0, 1)
    coarse = max(1, round(n * 3 / 18))
    mid = max(1, round(n * 4 / 18))
    fine = n - coarse - mid
    while fine < 1:
        if mid > 1:
            mid -= 1
        else:
            coarse -= 1
        fine = n - coarse - mid
    return (coarse, mid, fine)


class FeaturePyramid(nn.Module):
    """Three-level coarse/mid/fine extractor with top-down fusion."""

    def __init__(self, resolution: int, img_channels: int = 3,
                 base_channels: int = 32, fpn_dim: int = 64):
        super().__init__()
        if resolution < 8:
            raise InvalidArgumentError(f"resolution must be >= 8, got {resolution}")
        self.resolution = resolution
        c1, c2, c3 = base_channels, base_channels * 2, base_channels * 4
        self.stem = nn.Sequential(
            nn.Conv2d(img_channels, c1, 3, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(c1, c1, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
        )
        self.down2 = nn.Sequential(
            nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.LeakyReLU(0.2))
        self.down3 = nn.Sequential(
            nn.Conv2d(c2, c3, 3, stride=2, padding=1), nn.LeakyReLU(0.2))
        self.lat_fine = nn.Conv2d(c1, fpn_dim, 1)
        self.lat_mid = nn.Conv2d(c2, fpn_dim, 1)
        self.lat_coarse = nn.Conv2d(c3, fpn_dim, 1)

    def forward(self, x: torch.Tensor):
        f1 = self.stem(x)      # res/2
        f2 = self.down2(f1)    # res/4
        f3 = self.down3(f2)    # res/8
        coarse = self.lat_coarse(f3)
        mid = self.lat_mid(f2) + F.interpolate(coarse, scale_factor=2, mode="nearest")
        fine = self.lat_fine(f1) + F.interpolate(mid, scale_factor=2, mode="nearest")
        return coarse, mid, fine


class TokenHead(nn.Module):
    """Pools one pyramid level into a single latent token (map2style-like)."""

    def __init__(self, fpn_dim: int, latent_dim: int, spatial: int):
        super().__init__()
        if spatial == 1:
            self.net = nn.Conv2d(fpn_dim, latent_dim, 1)
        else:
            steps = int(math.log2(spatial))
            layers = [nn.Conv2d(fpn_dim, latent_dim, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            for _ in range(steps - 1):
                layers += [nn.Conv2d(latent_dim, latent_dim, 3, stride=2, padding=1),
                           nn.LeakyReLU(0.2)]
            self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).flatten(1)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, head_dim: int):
        super().__init__()
        inner = heads * head_dim
        self.heads = heads
        self.head_dim = head_dim
        self.scale = head_dim ** -0.5
        self.to_qkv = nn.Linear(dim, 3 * inner, bias=False)
        self.to_out = nn.Linear(inner, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        qkv = self.to_qkv(x).reshape(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, -1)
        return self.to_out(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, head_dim: int, mlp_dim: int | None):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, head_dim)
        if mlp_dim is not None:
            self.ln2 = nn.LayerNorm(dim)
            self.mlp = nn.Sequential(
                nn.Linear(dim, mlp_dim), nn.GELU(), nn.Linear(mlp_dim, dim))
        else:
            self.ln2 = None
            self.mlp = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        if self.mlp is not None:
            x = x + self.mlp(self.ln2(x))
        return x


def _build_sub_encoder(kind: str, dim: int, depth: int, heads: int,
                       head_dim: int, mlp_dim: int) -> nn.Module:
    if kind == "transformer":
        return nn.Sequential(*[TransformerBlock(dim, heads, head_dim, mlp_dim)
                               for _ in range(depth)])
    if kind == "attention":
        return nn.Sequential(*[TransformerBlock(dim, heads, head_dim, None)
                               for _ in range(depth)])
    if kind == "linear_1":
        return nn.Sequential(nn.Linear(dim, dim), nn.LeakyReLU(0.2))
    if kind == "linear_8":
        layers = []
        for _ in range(8):
            layers += [nn.Linear(dim, dim), nn.LeakyReLU(0.2)]
        return nn.Sequential(*layers)
    raise InvalidArgumentError(f"unknown sub-encoder kind {kind!r}; expected one of {SUB_ENCODER_KINDS}")


class Encoder(nn.Module):
    """Maps an image to a stack of n latent rows for the paired decoder."""

    def __init__(self, resolution: int, latent_dim: int = 512, img_channels: int = 3,
                 sub_encoder: str = "transformer", base_channels: int = 32,
                 fpn_dim: int = 64, depth: int = 6, heads: int = 14,
                 head_dim: int = 64, mlp_dim: int = 1024, seed: int | None = None):
        super().__init__()
        if sub_encoder not in SUB_ENCODER_KINDS:
            raise InvalidArgumentError(
                f"unknown sub-encoder kind {sub_encoder!r}; expected one of {SUB_ENCODER_KINDS}")
        self.resolution = resolution
        self.latent_dim = latent_dim
        self.img_channels = img_channels
        self.num_layers = layer_count(resolution)
        self.sub_encoder_kind = sub_encoder
        self.base_channels = base_channels
        self.fpn_dim = fpn_dim
        self.depth = depth
        self.heads = heads
        self.head_dim = head_dim
        self.mlp_dim = mlp_dim

        if seed is not None:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build()
        else:
            self._build()

    def _build(self):
        self.pyramid = FeaturePyramid(self.resolution, self.img_channels,
                                      self.base_channels, self.fpn_dim)
        n_coarse, n_mid, n_fine = token_groups(self.num_layers)
        self.group_sizes = (n_coarse, n_mid, n_fine)
        spatial = {"coarse": self.resolution // 8, "mid": self.resolution // 4,
                   "fine": self.resolution // 2}
        heads = []
        for level, count in zip(("coarse", "mid", "fine"), self.group_sizes):
            for _ in range(count):
                heads.append(TokenHead(self.fpn_dim, self.latent_dim, spatial[level]))
        self.token_heads = nn.ModuleList(heads)
        self.pos_embed = nn.Parameter(0.02 * torch.randn(1, self.num_layers, self.latent_dim))
        self.sub = _build_sub_encoder(self.sub_encoder_kind, self.latent_dim,
                                      self.depth, self.heads, self.head_dim, self.mlp_dim)

    def meta(self) -> dict:
        return {
            "resolution": self.resolution,
            "latent_dim": self.latent_dim,
            "img_channels": self.img_channels,
            "n": self.num_layers,
            "sub_encoder": self.sub_encoder_kind,
            "base_channels": self.base_channels,
            "fpn_dim": self.fpn_dim,
            "depth": self.depth,
            "heads": self.heads,
            "head_dim": self.head_dim,
            "mlp_dim": self.mlp_dim,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "Encoder":
        return cls(resolution=meta["resolution"], latent_dim=meta["latent_dim"],
                   img_channels=meta["img_channels"], sub_encoder=meta["sub_encoder"],
                   base_channels=meta["base_channels"], fpn_dim=meta["fpn_dim"],
                   depth=meta["depth"], heads=meta["heads"], head_dim=meta["head_dim"],
                   mlp_dim=meta["mlp_dim"])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise InvalidArgumentError(f"expected (B, C, H, W) input, got shape {tuple(x.shape)}")
        if x.shape[2] != self.resolution or x.shape[3] != self.resolution:
            raise InvalidArgumentError(
                f"input is {x.shape[2]}x{x.shape[3]}, encoder expects "
                f"{self.resolution}x{self.resolution}"
            )
        if x.shape[1] != self.img_channels:
            raise InvalidArgumentError(
                f"input has {x.shape[1]} channels, encoder expects {self.img_channels}")
        coarse, mid, fine = self.pyramid(x)
        n_coarse, n_mid, _ = self.group_sizes
        tokens = []
        for i, head in enumerate(self.token_heads):
            if i < n_coarse:
                src = coarse
            elif i < n_coarse + n_mid:
                src = mid
            else:
                src = fine
            tokens.append(head(src))
        seq = torch.stack(tokens, dim=1) + self.pos_embed
        return self.sub(seq)


def encode(e: Encoder, x: torch.Tensor):
    """Encode an image (C, H, W) to an ExtendedLatent, or a batch to (B, n, dim)."""
    single = x.dim() == 3
    out = e(x.unsqueeze(0) if single else x)
    return ExtendedLatent(out[0]) if single else out
