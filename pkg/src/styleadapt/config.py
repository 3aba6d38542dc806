"""Run configuration: one YAML document plus flag overrides (flags win).

Precedence, lowest to highest: built-in defaults, --preset, the --config
file, then individual command-line flags / --set overrides. Full-scale
recipes for the published target domains are available as named presets.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .adaptation.losses import AdaptationConfig
from .encoder.losses import EncoderConfig
from .errors import ConfigError

STAGES = ("train-encoder", "adapt", "stylize", "sample", "evaluate", "invert")
METRIC_NAMES = ("fid", "lpips_distance", "lpips_cluster")

CACHE_DIR_ENV = "STYLEADAPT_CACHE_DIR"


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_DIR_ENV, "~/.cache/styleadapt")).expanduser()


@dataclass
class RunConfig:
    stage: str = "sample"
    resolution: int = 256
    seed: int = 0
    latent_dim: int = 512
    img_channels: int = 3
    backbone: str = "toy"             # "toy" or a backbone checkpoint path
    dataset_dir: str | None = None
    inputs_dir: str | None = None
    generated_dir: str | None = None
    style_reference_dir: str | None = None
    cluster_training_dir: str | None = None
    decoder_in: str | None = None
    decoder_out: str | None = None
    encoder_in: str | None = None
    encoder_out: str | None = None
    output_dir: str | None = None
    report_out: str | None = None
    sample_count: int = 16
    metrics: tuple = METRIC_NAMES
    allow_oversized_target: bool = False
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def validate(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if self.resolution < 8 or self.resolution & (self.resolution - 1):
            raise ConfigError(f"resolution must be a power of two >= 8, got {self.resolution}")
        unknown = set(self.metrics) - set(METRIC_NAMES)
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}; expected subset of {METRIC_NAMES}")
        self.adaptation.validate()
        self.encoder.validate()

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (AdaptationConfig, EncoderConfig)):
                sub = {sf.name: getattr(value, sf.name) for sf in fields(value)}
                out[f.name] = {k: list(v) if isinstance(v, tuple) else v
                               for k, v in sub.items()}
            elif isinstance(value, tuple):
                out[f.name] = list(value)
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for name, sub_cls in (("adaptation", AdaptationConfig), ("encoder", EncoderConfig)):
            if name in data and data[name] is not None:
                sub = dict(data[name])
                sub_known = {f.name for f in fields(sub_cls)}
                sub_unknown = set(sub) - sub_known
                if sub_unknown:
                    raise ConfigError(f"unknown {name} keys: {sorted(sub_unknown)}")
                for f in fields(sub_cls):
                    if f.name in sub and isinstance(getattr(sub_cls(), f.name), tuple):
                        sub[f.name] = tuple(sub[f.name])
                data[name] = sub_cls(**sub)
        if "metrics" in data and data["metrics"] is not None:
            data["metrics"] = tuple(data["metrics"])
        return cls(**data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        data = yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        return cls.from_dict(data)


# Full-scale 10-shot recipes: shared settings (adv weight 1.0, style-structure
# weight 1000, margin 2, lr 0.002) are the AdaptationConfig defaults; the
# per-domain contrastive weight, positive weighting and step budget differ.
PRESETS: dict[str, dict] = {
    "sketches": {"adaptation": {"cdt_weight": 0.05, "iterations": 5000, "positive_weight": 1.5}},
    "raphael": {"adaptation": {"cdt_weight": 0.05, "iterations": 3000, "positive_weight": 2.0}},
    "caricature": {"adaptation": {"cdt_weight": 0.02, "iterations": 3000, "positive_weight": 2.0}},
    "cartoon": {"adaptation": {"cdt_weight": 0.005, "iterations": 1000, "positive_weight": 2.0}},
    "roy-lichtenstein": {"adaptation": {"cdt_weight": 0.005, "iterations": 1250, "positive_weight": 2.0}},
    "sunglasses": {"adaptation": {"cdt_weight": 0.005, "iterations": 2000, "positive_weight": 2.0}},
    "one-shot": {"adaptation": {"cdt_weight": 0.005, "iterations": 600, "positive_weight": 2.0}},
    "encoder-fullscale": {"encoder": {"stage1_iterations": 170000, "dual_path_iterations": 70000}},
    "toy": {
        "resolution": 32,
        "latent_dim": 32,
        "adaptation": {"batch_size": 4, "iterations": 300},
        "encoder": {"stage1_iterations": 300, "dual_path_iterations": 300},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def build_config(preset: str | None = None, config_path=None,
                 overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig from defaults, preset, file and flat overrides."""
    data = RunConfig().to_dict()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        data = _deep_merge(data, PRESETS[preset])
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        loaded = yaml.safe_load(path.read_text())
        if not isinstance(loaded, dict):
            raise ConfigError("config document must be a mapping")
        data = _deep_merge(data, loaded)
    cfg = RunConfig.from_dict(data)
    if overrides:
        apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict):
    """Apply dotted-path overrides like {"adaptation.learning_rate": "0.01"}."""
    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        target = cfg
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise ConfigError(f"unknown config path {dotted!r}")
            target = getattr(target, part)
        name = parts[-1]
        if not hasattr(target, name):
            raise ConfigError(f"unknown config path {dotted!r}")
        current = getattr(target, name)
        setattr(target, name, _cast_like(current, raw, dotted))


def _cast_like(current, raw, dotted: str):
    if isinstance(raw, str):
        try:
            if isinstance(current, bool):
                return raw.lower() in ("1", "true", "yes", "on")
            if isinstance(current, int) and not isinstance(current, bool):
                return int(raw)
            if isinstance(current, float):
                return float(raw)
            if isinstance(current, tuple):
                return tuple(type(current[0])(part) if current else part
                             for part in raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"cannot parse override {dotted}={raw!r}: {exc}") from exc
    return raw
