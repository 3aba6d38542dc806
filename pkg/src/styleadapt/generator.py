"""Style-based decoder at configurable scale.

The synthesis network is a pyramid of upsample+conv blocks with one
style-modulated instance-normalization (AdaIN) per block, two blocks per
resolution level from 4 px up to the output side. A shared mapping network
turns each row of an extended latent into the intermediate style vector
consumed by the matching block. The per-block affine outputs fed into AdaIN
are captured as a trace so losses can operate on them directly.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgumentError, NumericFailureError
from .latent import ExtendedLatent, layer_count

ADAIN_EPS = 1e-5


def adain(feature: torch.Tensor, style_input: torch.Tensor, eps: float = ADAIN_EPS) -> torch.Tensor:
    """Adaptive instance normalization.

    Each channel is normalized to zero mean / unit variance over its spatial
    extent (eps-stabilized), then scaled and shifted per channel. The style
    input is a (B, 2C) matrix holding the scales in its first C columns and
    the shifts in the last C.
    """
    if feature.dim() != 4:
        raise InvalidArgumentError(f"feature must be (B, C, H, W), got shape {tuple(feature.shape)}")
    b, c = feature.shape[0], feature.shape[1]
    if style_input.dim() != 2 or style_input.shape[0] != b or style_input.shape[1] != 2 * c:
        raise InvalidArgumentError(
            f"style input must be ({b}, {2 * c}) for feature shape {tuple(feature.shape)}, "
            f"got {tuple(style_input.shape)}"
        )
    mean = feature.mean(dim=(2, 3), keepdim=True)
    var = feature.var(dim=(2, 3), unbiased=False, keepdim=True)
    normalized = (feature - mean) / torch.sqrt(var + eps)
    scale, shift = style_input.chunk(2, dim=1)
    return scale.view(b, c, 1, 1) * normalized + shift.view(b, c, 1, 1)


@dataclass
class AdaINInputTrace:
    """Per-layer style-modulation inputs captured during synthesis.

    layers[l] is the (B, 2*C_l) matrix fed into the l-th AdaIN block.
    """

    layers: list[torch.Tensor]

    def __post_init__(self):
        if len(self.layers) == 0:
            raise InvalidArgumentError("trace must cover at least one layer")
        batch = self.layers[0].shape[0]
        for i, t in enumerate(self.layers):
            if t.dim() != 2 or t.shape[0] != batch:
                raise InvalidArgumentError(
                    f"trace layer {i} must be a (B, d_l) matrix with B={batch}, got {tuple(t.shape)}"
                )

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def batch_size(self) -> int:
        return self.layers[0].shape[0]

    def detach(self) -> "AdaINInputTrace":
        return AdaINInputTrace([t.detach() for t in self.layers])


class PixelNorm(nn.Module):
    def forward(self, x):
        return x * (x.pow(2).mean(dim=1, keepdim=True) + 1e-8).rsqrt()


class MappingNetwork(nn.Module):
    """Fully connected stack translating a latent row into a style vector."""

    def __init__(self, latent_dim: int = 512, num_layers: int = 8,
                 pixel_norm: bool = True, activation: str = "lrelu"):
        super().__init__()
        if num_layers < 1:
            raise InvalidArgumentError(f"mapping needs >= 1 layers, got {num_layers}")
        if activation not in ("lrelu", "linear"):
            raise InvalidArgumentError(f"unknown activation {activation!r}")
        self.latent_dim = latent_dim
        self.num_layers = num_layers
        self.pixel_norm = pixel_norm
        self.activation = activation
        self.norm = PixelNorm() if pixel_norm else nn.Identity()
        self.layers = nn.ModuleList(
            nn.Linear(latent_dim, latent_dim) for _ in range(num_layers)
        )

    @classmethod
    def identity(cls, latent_dim: int, num_layers: int = 2) -> "MappingNetwork":
        """A mapping that passes its input through unchanged."""
        net = cls(latent_dim, num_layers=num_layers, pixel_norm=False, activation="linear")
        with torch.no_grad():
            for layer in net.layers:
                layer.weight.copy_(torch.eye(latent_dim))
                layer.bias.zero_()
        return net

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.norm(z)
        for layer in self.layers:
            x = layer(x)
            if self.activation == "lrelu":
                x = F.leaky_relu(x, 0.2)
        return x


class SynthesisBlock(nn.Module):
    """One conv + style-modulated AdaIN step, optionally preceded by 2x upsampling."""

    def __init__(self, in_channels: int, out_channels: int, latent_dim: int, upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.style = nn.Linear(latent_dim, 2 * out_channels)
        self.noise_weight = nn.Parameter(torch.zeros(()))
        with torch.no_grad():
            # start at scale 1 / shift 0 so the untrained modulation is neutral
            self.style.weight.mul_(0.25)
            self.style.bias[:out_channels] = 1.0
            self.style.bias[out_channels:] = 0.0

    def forward(self, x: torch.Tensor, w: torch.Tensor, noise_mode: str = "zero"):
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        if noise_mode == "random":
            noise = torch.randn(x.shape[0], 1, x.shape[2], x.shape[3],
                                device=x.device, dtype=x.dtype)
            x = x + self.noise_weight * noise
        style_input = self.style(w)
        x = adain(x, style_input)
        return F.leaky_relu(x, 0.2), style_input


def _channel_schedule(resolution: int, base_channels: int, max_channels: int) -> list[int]:
    levels = int(math.log2(resolution)) - 1
    return [min(max_channels, base_channels << (levels - 1 - lv)) for lv in range(levels)]


class Generator(nn.Module):
    """Mapping network plus synthesis pyramid; plays both source and target roles.

    When `mapping_frozen` is set (the adapted-copy configuration) the mapping
    parameters carry requires_grad=False and are excluded from optimizers, so
    no training step can change them.
    """

    def __init__(self, resolution: int = 256, latent_dim: int = 512, img_channels: int = 3,
                 base_channels: int = 32, max_channels: int = 256,
                 mapping_layers: int = 8, mapping_pixel_norm: bool = True,
                 mapping_activation: str = "lrelu", seed: int | None = None):
        super().__init__()
        self.resolution = resolution
        self.num_layers = layer_count(resolution)
        self.latent_dim = latent_dim
        self.img_channels = img_channels
        self.base_channels = base_channels
        self.max_channels = max_channels
        self.mapping_frozen = False
        self.noise_mode = "zero"

        if seed is not None:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build(mapping_layers, mapping_pixel_norm, mapping_activation)
        else:
            self._build(mapping_layers, mapping_pixel_norm, mapping_activation)

    def _build(self, mapping_layers, mapping_pixel_norm, mapping_activation):
        self.mapping = MappingNetwork(self.latent_dim, mapping_layers,
                                      mapping_pixel_norm, mapping_activation)
        channels = _channel_schedule(self.resolution, self.base_channels, self.max_channels)
        self.const = nn.Parameter(torch.randn(1, channels[0], 4, 4))
        blocks = []
        for i in range(self.num_layers):
            level = i // 2
            in_ch = channels[level] if i % 2 or i == 0 else channels[level - 1]
            blocks.append(SynthesisBlock(in_ch, channels[level], self.latent_dim,
                                         upsample=(i % 2 == 0 and i > 0)))
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = nn.Conv2d(channels[-1], self.img_channels, 1)

    def meta(self) -> dict:
        return {
            "resolution": self.resolution,
            "n": self.num_layers,
            "latent_dim": self.latent_dim,
            "img_channels": self.img_channels,
            "base_channels": self.base_channels,
            "max_channels": self.max_channels,
            "mapping_layers": self.mapping.num_layers,
            "mapping_pixel_norm": self.mapping.pixel_norm,
            "mapping_activation": self.mapping.activation,
            "mapping_frozen": self.mapping_frozen,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "Generator":
        gen = cls(
            resolution=meta["resolution"],
            latent_dim=meta["latent_dim"],
            img_channels=meta["img_channels"],
            base_channels=meta["base_channels"],
            max_channels=meta["max_channels"],
            mapping_layers=meta["mapping_layers"],
            mapping_pixel_norm=meta["mapping_pixel_norm"],
            mapping_activation=meta["mapping_activation"],
        )
        if meta.get("mapping_frozen"):
            gen.freeze_mapping()
        return gen

    def freeze_mapping(self):
        self.mapping_frozen = True
        for p in self.mapping.parameters():
            p.requires_grad_(False)

    def synthesis_parameters(self):
        """Everything except the mapping network (the adaptable part)."""
        seen = {id(p) for p in self.mapping.parameters()}
        return [p for p in self.parameters() if id(p) not in seen]

    def _zplus_tensor(self, zplus) -> torch.Tensor:
        if isinstance(zplus, ExtendedLatent):
            zplus = zplus.rows
        if zplus.dim() == 2:
            zplus = zplus.unsqueeze(0)
        if zplus.dim() != 3:
            raise InvalidArgumentError(
                f"extended latent must be (n, dim) or (B, n, dim), got shape {tuple(zplus.shape)}"
            )
        if zplus.shape[1] != self.num_layers:
            raise InvalidArgumentError(
                f"extended latent has {zplus.shape[1]} rows, generator expects {self.num_layers}"
            )
        if zplus.shape[2] != self.latent_dim:
            raise InvalidArgumentError(
                f"latent dim {zplus.shape[2]} does not match generator dim {self.latent_dim}"
            )
        return zplus

    def styles(self, zplus) -> torch.Tensor:
        """Map each latent row independently to its layer's style vector."""
        zp = self._zplus_tensor(zplus)
        b, n, d = zp.shape
        return self.mapping(zp.reshape(b * n, d)).reshape(b, n, d)

    def forward(self, zplus, capture_trace: bool = True):
        zp = self._zplus_tensor(zplus)
        ws = self.styles(zp)
        x = self.const.expand(zp.shape[0], -1, -1, -1)
        trace_layers = []
        for i, block in enumerate(self.blocks):
            x, style_input = block(x, ws[:, i, :], noise_mode=self.noise_mode)
            if capture_trace:
                trace_layers.append(style_input)
        img = torch.tanh(self.to_rgb(x))
        if not torch.isfinite(img).all():
            raise NumericFailureError("synthesis produced non-finite values")
        trace = AdaINInputTrace(trace_layers) if capture_trace else None
        return img, trace


def map_to_style(g: Generator, zp) -> torch.Tensor:
    """Per-layer style vectors for an extended latent; (n, dim) or (B, n, dim)."""
    single = isinstance(zp, ExtendedLatent) or (torch.is_tensor(zp) and zp.dim() == 2)
    out = g.styles(zp)
    return out[0] if single else out


def synthesize(g: Generator, zp):
    """Generate images from an extended latent and capture the AdaIN-input trace."""
    img, trace = g(zp, capture_trace=True)
    return img, trace


def clone_for_adaptation(source: Generator) -> Generator:
    """Deep copy of the source generator with the mapping network frozen."""
    target = copy.deepcopy(source)
    target.freeze_mapping()
    return target
