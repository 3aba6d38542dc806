"""Latent-space primitives shared by the encoder and the decoders.

The generator consumes an extended code: a stack of n latent rows, one per
style-modulated layer. A plain code is lifted into that space either by
repeating it n times or by stacking n distinct codes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import torch

from .errors import InvalidArgumentError

LATENT_DIM = 512


def stage_seed(seed: int, stage: str) -> int:
    """Derive an independent 63-bit seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{stage}:{seed}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def stage_generator(seed: int, stage: str) -> torch.Generator:
    """One named pseudorandom generator per pipeline stage.

    Each training run owns its generator instances; they are not shared
    across threads.
    """
    gen = torch.Generator()
    gen.manual_seed(stage_seed(seed, stage))
    return gen


@dataclass(frozen=True)
class LatentCode:
    """A single latent vector, nominally drawn from a standard normal."""

    values: torch.Tensor

    def __post_init__(self):
        if self.values.dim() != 1 or self.values.numel() == 0:
            raise InvalidArgumentError(
                f"latent code must be a non-empty 1-D vector, got shape {tuple(self.values.shape)}"
            )

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ExtendedLatent:
    """An n x dim stack of latent rows, one row per generator layer."""

    rows: torch.Tensor

    def __post_init__(self):
        if self.rows.dim() != 2 or self.rows.shape[0] == 0 or self.rows.shape[1] == 0:
            raise InvalidArgumentError(
                f"extended latent must be a non-empty 2-D matrix, got shape {tuple(self.rows.shape)}"
            )

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def is_repeated(self, tol: float = 0.0) -> bool:
        """True when every row equals the first row (a repeat-extended code)."""
        return bool((self.rows - self.rows[0]).abs().max() <= tol)


@dataclass(frozen=True)
class ResolutionSpec:
    """Output resolution and the layer count it induces."""

    resolution: int
    n: int

    @classmethod
    def from_resolution(cls, resolution: int) -> "ResolutionSpec":
        return cls(resolution=resolution, n=layer_count(resolution))

    def __post_init__(self):
        if self.n != layer_count(self.resolution):
            raise InvalidArgumentError(
                f"layer count {self.n} inconsistent with resolution {self.resolution}"
            )


def layer_count(resolution: int) -> int:
    """Number of style-input layers for a square output of the given side.

    Two style-modulated layers per resolution level from 4 px up to the
    output side: 2 * (log2(resolution) - 1). 1024 -> 18, 256 -> 14.
    """
    if resolution < 8 or (resolution & (resolution - 1)) != 0:
        raise InvalidArgumentError(
            f"resolution must be a power of two >= 8, got {resolution}"
        )
    return 2 * (int(math.log2(resolution)) - 1)


def sample_z(count: int, seed: int, dim: int = LATENT_DIM, stage: str = "sample_z") -> list[LatentCode]:
    """Draw `count` independent standard-normal codes, reproducibly.

    The same (count, seed, dim, stage) always yields bitwise-identical codes.
    """
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    if dim < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
    gen = stage_generator(seed, stage)
    block = torch.randn(count, dim, generator=gen)
    return [LatentCode(block[i].clone()) for i in range(count)]


def extend_repeat(z: LatentCode, n: int) -> ExtendedLatent:
    """Lift a single code into the extended space by repeating it n times."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    return ExtendedLatent(z.values.unsqueeze(0).repeat(n, 1))


def stack_zplus(codes: list[LatentCode], expected_n: int | None = None) -> ExtendedLatent:
    """Stack n distinct codes into an extended code, in list order."""
    if len(codes) == 0:
        raise InvalidArgumentError("cannot stack an empty list of codes")
    if expected_n is not None and len(codes) != expected_n:
        raise InvalidArgumentError(
            f"generator expects {expected_n} rows, got {len(codes)}"
        )
    dims = {c.dim for c in codes}
    if len(dims) != 1:
        raise InvalidArgumentError(f"codes have inconsistent dimensions: {sorted(dims)}")
    return ExtendedLatent(torch.stack([c.values for c in codes], dim=0))


def repeat_batch(z: torch.Tensor, n: int) -> torch.Tensor:
    """Repeat-extend a (B, dim) batch of codes to (B, n, dim)."""
    if z.dim() != 2:
        raise InvalidArgumentError(f"expected a (B, dim) batch, got shape {tuple(z.shape)}")
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    return z.unsqueeze(1).expand(z.shape[0], n, z.shape[1]).contiguous()
