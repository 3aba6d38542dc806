import pytest
import torch
from hypothesis import HealthCheck, settings

from styleadapt import Generator, PerceptualWeights, ToyBackbone, ToyIdentityEmbedder

settings.register_profile(
    "suite", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_tiny_generator(resolution=16, latent_dim=8, img_channels=3, seed=0,
                        mapping_layers=2, base_channels=8, max_channels=16):
    return Generator(resolution=resolution, latent_dim=latent_dim,
                     img_channels=img_channels, base_channels=base_channels,
                     max_channels=max_channels, mapping_layers=mapping_layers,
                     seed=seed)


@pytest.fixture
def tiny_generator():
    return make_tiny_generator()


@pytest.fixture(scope="session")
def toy_backbone():
    return ToyBackbone(in_channels=3, seed=0)


@pytest.fixture(scope="session")
def unit_weights(toy_backbone):
    return PerceptualWeights.uniform(toy_backbone.num_taps)


@pytest.fixture(scope="session")
def toy_embedder():
    return ToyIdentityEmbedder(in_channels=3, seed=0)


def rand_images(count, resolution, channels=3, seed=0, dtype=torch.float32):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(count, channels, resolution, resolution,
                      generator=gen, dtype=dtype) * 2 - 1
