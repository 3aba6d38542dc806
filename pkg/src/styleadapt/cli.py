"""Command-line surface: train-encoder, adapt, stylize, sample, evaluate, invert.

Every command is driven by one RunConfig assembled from defaults, an
optional preset, an optional YAML config file, and flags (flags win).
Exit codes: 0 success, 2 config error, 3 numeric failure, 4 invalid input
data.
"""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click
import torch

from .adaptation import FEW_SHOT_LIMIT, adapt
from .checkpoint import load_backbone, load_encoder, load_generator, save_encoder, save_generator
from .config import PRESETS, RunConfig, build_config, apply_overrides, default_cache_dir
from .dataset import load_image_folder, save_grid, save_image
from .encoder import train_encoder
from .errors import ConfigError, InvalidArgumentError, NumericFailureError, UndefinedMetricError
from .latent import repeat_batch, stage_generator
from .metrics import MetricsReport, backbone_fid_features, fid, lpips_cluster, lpips_distance_eval
from .perceptual import PerceptualWeights, ToyBackbone, ToyIdentityEmbedder

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INVALID_INPUT = 4

_PATH_FLAGS = (
    ("--dataset", "dataset_dir", "Flat folder of input images"),
    ("--inputs", "inputs_dir", "Folder of photos to stylize / compare against"),
    ("--generated", "generated_dir", "Folder of generated images to evaluate"),
    ("--style-ref", "style_reference_dir", "Folder of real style images (distribution reference)"),
    ("--train-ref", "cluster_training_dir", "Folder with the few training exemplars"),
    ("--decoder", "decoder_in", "Decoder checkpoint to read"),
    ("--decoder-out", "decoder_out", "Where to write the decoder checkpoint"),
    ("--encoder", "encoder_in", "Encoder checkpoint to read"),
    ("--encoder-out", "encoder_out", "Where to write the encoder checkpoint"),
    ("--report", "report_out", "Where to write the metrics report"),
)


def shared_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="YAML config file")(fn)
    fn = click.option("--preset", default=None,
                      help=f"named recipe, one of: {', '.join(sorted(PRESETS))}")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--resolution", type=int, default=None)(fn)
    fn = click.option("--out", "output_dir", type=click.Path(), default=None,
                      help="output directory")(fn)
    fn = click.option("--set", "set_overrides", multiple=True, metavar="KEY=VALUE",
                      help="dotted config override, e.g. adaptation.learning_rate=0.01")(fn)
    for flag, attr, help_text in _PATH_FLAGS:
        fn = click.option(flag, attr, type=click.Path(), default=None, help=help_text)(fn)
    return fn


def _assemble(stage, config_path, preset, seed, resolution, output_dir,
              set_overrides, **path_flags) -> RunConfig:
    cfg = build_config(preset=preset, config_path=config_path)
    cfg.stage = stage
    if seed is not None:
        cfg.seed = seed
    if resolution is not None:
        cfg.resolution = resolution
    if output_dir is not None:
        cfg.output_dir = str(output_dir)
    for attr, value in path_flags.items():
        if value is not None:
            setattr(cfg, attr, str(value))
    overrides = {}
    for item in set_overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = value
    apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _require(cfg: RunConfig, attr: str, what: str, directory: bool = False) -> Path:
    value = getattr(cfg, attr)
    if value is None:
        raise ConfigError(f"{what} is required (set {attr} or the matching flag)")
    path = Path(value)
    if directory and not path.is_dir():
        raise ConfigError(f"{what} {path} is not a directory")
    if not directory and not path.is_file():
        raise ConfigError(f"{what} {path} does not exist")
    return path


def _make_backbone(cfg: RunConfig):
    if cfg.backbone == "toy":
        backbone = ToyBackbone(in_channels=cfg.img_channels)
    else:
        path = Path(cfg.backbone)
        if not path.is_file():
            raise ConfigError(f"backbone checkpoint {path} does not exist")
        backbone = load_backbone(path)
    return backbone, PerceptualWeights.uniform(backbone.num_taps)


def _default_ckpt(name: str) -> Path:
    cache = default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    return cache / name


def _out_dir(cfg: RunConfig) -> Path:
    if cfg.output_dir is None:
        raise ConfigError("output directory is required (use --out)")
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_train_encoder(cfg: RunConfig):
    decoder = load_generator(_require(cfg, "decoder_in", "decoder checkpoint"))
    dataset = load_image_folder(_require(cfg, "dataset_dir", "dataset folder", directory=True),
                                decoder.resolution, channels=decoder.img_channels)
    backbone, weights = _make_backbone(cfg)
    embedder = ToyIdentityEmbedder(in_channels=decoder.img_channels)
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    encoder = train_encoder(dataset, decoder, cfg.encoder, backbone=backbone,
                            perceptual_weights=weights, embedder=embedder,
                            seed=cfg.seed, out_dir=out_dir)
    target = Path(cfg.encoder_out) if cfg.encoder_out else _default_ckpt("encoder.ckpt")
    save_encoder(target, encoder)
    click.echo(f"encoder checkpoint written to {target}")


def run_adapt(cfg: RunConfig):
    source = load_generator(_require(cfg, "decoder_in", "decoder checkpoint"))
    dataset = load_image_folder(_require(cfg, "dataset_dir", "target image folder", directory=True),
                                source.resolution, channels=source.img_channels)
    if len(dataset) > FEW_SHOT_LIMIT and not cfg.allow_oversized_target:
        raise InvalidArgumentError(
            f"few-shot adaptation takes at most {FEW_SHOT_LIMIT} target images, got "
            f"{len(dataset)} (set allow_oversized_target to override)"
        )
    backbone, weights = _make_backbone(cfg)
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    target = adapt(source, dataset.images, cfg.adaptation, backbone=backbone,
                   perceptual_weights=weights, seed=cfg.seed, out_dir=out_dir,
                   allow_oversized=cfg.allow_oversized_target)
    dest = Path(cfg.decoder_out) if cfg.decoder_out else _default_ckpt("decoder_adapted.ckpt")
    save_generator(dest, target)
    click.echo(f"adapted decoder written to {dest}")


def _run_stylize(cfg: RunConfig):
    decoder = load_generator(_require(cfg, "decoder_in", "decoder checkpoint"))
    encoder = load_encoder(_require(cfg, "encoder_in", "encoder checkpoint"))
    if encoder.resolution != decoder.resolution or encoder.latent_dim != decoder.latent_dim:
        raise ConfigError(
            f"encoder ({encoder.resolution}px, dim {encoder.latent_dim}) does not match "
            f"decoder ({decoder.resolution}px, dim {decoder.latent_dim})"
        )
    dataset = load_image_folder(_require(cfg, "inputs_dir", "input photo folder", directory=True),
                                encoder.resolution, channels=encoder.img_channels)
    out_dir = _out_dir(cfg)
    encoder.eval()
    decoder.eval()
    with torch.no_grad():
        codes = encoder(dataset.images)
        images, _ = decoder(codes, capture_trace=False)
    for path, img in zip(dataset.paths, images):
        save_image(img, out_dir / f"{path.stem}.png")
    click.echo(f"wrote {len(dataset)} images to {out_dir}")


def run_sample(cfg: RunConfig):
    decoder = load_generator(_require(cfg, "decoder_in", "decoder checkpoint"))
    out_dir = _out_dir(cfg)
    if cfg.sample_count == 0:
        click.echo("sample count is 0; nothing to do")
        return
    rng = stage_generator(cfg.seed, "sample")
    z = torch.randn(cfg.sample_count, decoder.latent_dim, generator=rng)
    zplus = repeat_batch(z, decoder.num_layers)
    decoder.eval()
    with torch.no_grad():
        images, _ = decoder(zplus, capture_trace=False)
    for i in range(cfg.sample_count):
        save_image(images[i], out_dir / f"sample_{i:04d}.png")
    save_grid(images, out_dir / "grid.png")
    click.echo(f"wrote {cfg.sample_count} samples to {out_dir}")


def run_evaluate(cfg: RunConfig):
    backbone, weights = _make_backbone(cfg)
    generated = load_image_folder(_require(cfg, "generated_dir", "generated image folder",
                                           directory=True), cfg.resolution)
    report = MetricsReport(counts={"generated": len(generated)})

    if "fid" in cfg.metrics:
        if cfg.style_reference_dir is None:
            raise ConfigError("metric 'fid' needs a style reference folder (--style-ref)")
        reference = load_image_folder(Path(cfg.style_reference_dir), cfg.resolution)
        report.fid = fid(backbone_fid_features(generated.images, backbone),
                         backbone_fid_features(reference.images, backbone))
        report.counts["style_reference"] = len(reference)
    if "lpips_distance" in cfg.metrics:
        if cfg.inputs_dir is None:
            raise ConfigError("metric 'lpips_distance' needs the input photo folder (--inputs)")
        inputs = load_image_folder(Path(cfg.inputs_dir), cfg.resolution)
        if len(inputs) != len(generated):
            raise InvalidArgumentError(
                f"paired evaluation needs equal counts, got {len(inputs)} inputs vs "
                f"{len(generated)} generated"
            )
        report.lpips_distance_mean = lpips_distance_eval(inputs.images, generated.images,
                                                         backbone, weights)
        report.counts["inputs"] = len(inputs)
    if "lpips_cluster" in cfg.metrics:
        if cfg.cluster_training_dir is None:
            raise ConfigError("metric 'lpips_cluster' needs the training exemplar folder (--train-ref)")
        training = load_image_folder(Path(cfg.cluster_training_dir), cfg.resolution)
        mean, std = lpips_cluster(generated.images, training.images, backbone, weights)
        report.lpips_cluster_mean = mean
        report.lpips_cluster_std = std
        report.counts["cluster_training"] = len(training)

    dest = Path(cfg.report_out) if cfg.report_out else _out_dir(cfg) / "report.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(report.to_json() + "\n")
    click.echo(f"report written to {dest}")


_RUNNERS = {
    "train-encoder": run_train_encoder,
    "adapt": run_adapt,
    "stylize": _run_stylize,
    "sample": run_sample,
    "evaluate": run_evaluate,
    "invert": _run_stylize,
}


def _command(stage: str):
    def decorator(placeholder):
        @cli.command(name=stage, help=placeholder.__doc__)
        @shared_options
        @functools.wraps(placeholder)
        def command(**kwargs):
            try:
                cfg = _assemble(stage, **kwargs)
                _RUNNERS[stage](cfg)
            except ConfigError as exc:
                click.echo(f"config error: {exc}", err=True)
                sys.exit(EXIT_CONFIG)
            except NumericFailureError as exc:
                click.echo(f"numeric failure: {exc}", err=True)
                sys.exit(EXIT_NUMERIC)
            except (InvalidArgumentError, UndefinedMetricError) as exc:
                click.echo(f"invalid input: {exc}", err=True)
                sys.exit(EXIT_INVALID_INPUT)
        return command
    return decorator


@click.group()
def cli():
    """Few-shot style-generator adaptation pipeline."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@_command("train-encoder")
def _cmd_train_encoder():
    """Train the latent encoder against a frozen decoder checkpoint."""


@_command("adapt")
def _cmd_adapt():
    """Adapt a source decoder to a folder of at most ten target images."""


@_command("stylize")
def _cmd_stylize():
    """Encode input photos and decode them with an (adapted) decoder."""


@_command("sample")
def _cmd_sample():
    """Sample latent codes and write decoded images plus a grid."""


@_command("evaluate")
def _cmd_evaluate():
    """Compute the metrics report for a folder of generated images."""


@_command("invert")
def _cmd_invert():
    """Reconstruct photos through the encoder and the source decoder."""


def main():
    cli(prog_name="styleadapt")


if __name__ == "__main__":
    main()
