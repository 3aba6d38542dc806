"""Image folder ingestion and lossless image/grid emission.

Folders are read flat, sorted lexicographically by filename for
determinism. Images are decoded, center-cropped to square, resized to the
run resolution, and normalized to [-1, 1]. Alignment/cropping beyond that
is out of scope; inputs are assumed pre-aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import InvalidArgumentError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


@dataclass
class FewShotDataset:
    """An ordered set of images loaded at a fixed resolution."""

    paths: list[Path]
    images: torch.Tensor  # (N, C, H, W) in [-1, 1]

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[2]


def list_image_files(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise InvalidArgumentError(f"{folder} is not a directory")
    return sorted(p for p in folder.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def load_image(path, resolution: int, channels: int = 3) -> torch.Tensor:
    try:
        img = Image.open(path)
        img = img.convert("RGB" if channels == 3 else "L")
    except Exception as exc:
        raise InvalidArgumentError(f"cannot decode image {path}: {exc}") from exc
    side = min(img.size)
    left = (img.size[0] - side) // 2
    top = (img.size[1] - side) // 2
    img = img.crop((left, top, left + side, top + side))
    img = img.resize((resolution, resolution), Image.LANCZOS)
    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    if channels == 1:
        arr = arr[:, :, None]
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_image_folder(folder, resolution: int, channels: int = 3,
                      limit: int | None = None) -> FewShotDataset:
    paths = list_image_files(folder)
    if limit is not None:
        paths = paths[:limit]
    if not paths:
        raise InvalidArgumentError(f"no images found in {folder}")
    images = torch.stack([load_image(p, resolution, channels) for p in paths])
    return FewShotDataset(paths=paths, images=images)


def tensor_to_uint8(img: torch.Tensor) -> np.ndarray:
    """Map a (C, H, W) tensor in [-1, 1] to an HxWxC uint8 array."""
    arr = img.detach().cpu().clamp(-1, 1).numpy()
    arr = ((arr + 1.0) * 127.5).round().astype(np.uint8)
    return arr.transpose(1, 2, 0)


def save_image(img: torch.Tensor, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = tensor_to_uint8(img)
    mode = "RGB" if arr.shape[2] == 3 else "L"
    Image.fromarray(arr.squeeze(2) if mode == "L" else arr, mode=mode).save(path)


def save_grid(images: torch.Tensor, path, columns: int | None = None):
    """Write a row-major tile grid: tile k sits at row k // columns, column k % columns."""
    if images.dim() != 4 or images.shape[0] == 0:
        raise InvalidArgumentError("grid needs a non-empty (N, C, H, W) batch")
    n, c, h, w = images.shape
    cols = columns if columns is not None else max(1, int(math.ceil(math.sqrt(n))))
    rows = int(math.ceil(n / cols))
    canvas = torch.full((c, rows * h, cols * w), -1.0, dtype=images.dtype)
    for k in range(n):
        r, col = divmod(k, cols)
        canvas[:, r * h:(r + 1) * h, col * w:(col + 1) * w] = images[k]
    save_image(canvas, path)
