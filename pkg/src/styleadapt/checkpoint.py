"""Versioned checkpoint container.

A checkpoint is a single binary file:

    magic   8 bytes   b"SADCKPT\\0"
    version u32 LE    container format version (currently 1)
    hlen    u64 LE    byte length of the JSON header
    header  JSON      {"kind", "meta", "tensors": [{"name", "dtype", "shape"}]}
    data              raw little-endian C-contiguous tensor bytes, in header order

The header's `meta` carries everything needed to rebuild the module
(resolution, layer count, frozen-mapping flag, ...). Writing the same state
twice produces identical bytes; no pickling is involved. The format is kept
stable across minor versions: fields may be added to `meta`, never removed
or reinterpreted.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidArgumentError

MAGIC = b"SADCKPT\x00"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": (torch.float32, np.float32),
    "float64": (torch.float64, np.float64),
    "int64": (torch.int64, np.int64),
    "int32": (torch.int32, np.int32),
    "uint8": (torch.uint8, np.uint8),
    "bool": (torch.bool, np.bool_),
}
_TORCH_TO_NAME = {t: name for name, (t, _) in _DTYPES.items()}


def save_checkpoint(path, kind: str, state: dict, meta: dict):
    """Write named tensors plus metadata to the container format."""
    path = Path(path)
    entries = []
    blobs = []
    for name in sorted(state.keys()):
        tensor = state[name].detach().cpu().contiguous()
        dtype_name = _TORCH_TO_NAME.get(tensor.dtype)
        if dtype_name is None:
            raise InvalidArgumentError(f"unsupported tensor dtype {tensor.dtype} for {name!r}")
        entries.append({"name": name, "dtype": dtype_name, "shape": list(tensor.shape)})
        blobs.append(tensor.numpy().tobytes())
    header = json.dumps(
        {"kind": kind, "meta": meta, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path, expected_kind: str | None = None):
    """Read a container; returns (kind, state_dict, meta)."""
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise InvalidArgumentError(f"{path} is not a checkpoint container")
        (version,) = struct.unpack("<I", f.read(4))
        if version > FORMAT_VERSION:
            raise InvalidArgumentError(
                f"{path} uses container version {version}; this build reads <= {FORMAT_VERSION}"
            )
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        state = {}
        for entry in header["tensors"]:
            torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = f.read(count * np.dtype(np_dtype).itemsize)
            arr = np.frombuffer(raw, dtype=np_dtype).reshape(entry["shape"]).copy()
            state[entry["name"]] = torch.from_numpy(arr).to(torch_dtype)
    kind = header["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise InvalidArgumentError(f"{path} holds a {kind!r} checkpoint, expected {expected_kind!r}")
    return kind, state, header["meta"]


def state_checksum(module: torch.nn.Module) -> str:
    """Stable digest of a module's parameters and buffers (bitwise)."""
    import hashlib

    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state.keys()):
        tensor = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(tensor.dtype).encode())
        h.update(tensor.numpy().tobytes())
    return h.hexdigest()


def save_generator(path, generator):
    save_checkpoint(path, "generator", generator.state_dict(), generator.meta())


def load_generator(path):
    from .generator import Generator

    _, state, meta = load_checkpoint(path, expected_kind="generator")
    gen = Generator.from_meta(meta)
    gen.load_state_dict(state, strict=True)
    return gen


def save_encoder(path, encoder):
    save_checkpoint(path, "encoder", encoder.state_dict(), encoder.meta())


def load_encoder(path):
    from .encoder import Encoder

    _, state, meta = load_checkpoint(path, expected_kind="encoder")
    enc = Encoder.from_meta(meta)
    enc.load_state_dict(state, strict=True)
    return enc


def save_discriminators(path, pair):
    save_checkpoint(path, "discriminator_pair", pair.state_dict(), pair.meta())


def load_discriminators(path):
    from .adaptation.discriminators import DiscriminatorPair

    _, state, meta = load_checkpoint(path, expected_kind="discriminator_pair")
    pair = DiscriminatorPair.from_meta(meta)
    pair.load_state_dict(state, strict=True)
    return pair


def save_backbone(path, backbone):
    save_checkpoint(path, "backbone", backbone.state_dict(), backbone.meta())


def load_backbone(path):
    """Backbone adapter: restore a feature backbone from the container.

    The tensor-naming contract is the ToyBackbone state_dict schema:
    `convs.{i}.weight` / `convs.{i}.bias` for tap i, with `meta` holding
    in_channels, per-tap channel counts, and the downsample positions.
    Externally converted classifier weights that follow this contract load
    through the same path.
    """
    from .perceptual import ToyBackbone

    _, state, meta = load_checkpoint(path, expected_kind="backbone")
    backbone = ToyBackbone.from_meta(meta)
    backbone.load_state_dict(state, strict=True)
    return backbone
