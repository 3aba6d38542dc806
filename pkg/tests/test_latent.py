import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from styleadapt import (
    ExtendedLatent,
    InvalidArgumentError,
    LatentCode,
    ResolutionSpec,
    extend_repeat,
    layer_count,
    repeat_batch,
    sample_z,
    stack_zplus,
)
from styleadapt.latent import stage_generator, stage_seed


class TestSampleZ:
    def test_deterministic_for_fixed_seed(self):
        a = sample_z(4, seed=7)
        b = sample_z(4, seed=7)
        for ca, cb in zip(a, b):
            assert torch.equal(ca.values, cb.values)

    def test_different_seeds_differ(self):
        a = sample_z(2, seed=1)[0]
        b = sample_z(2, seed=2)[0]
        assert not torch.equal(a.values, b.values)

    def test_shape(self):
        codes = sample_z(1, seed=0)
        assert len(codes) == 1
        assert codes[0].values.shape == (512,)

    def test_law_of_large_numbers_moments(self):
        codes = sample_z(10_000, seed=1, dim=64)
        block = torch.stack([c.values for c in codes])
        mean = block.mean(dim=0)
        var = block.var(dim=0, unbiased=True)
        assert mean.abs().max() < 0.05
        assert var.min() > 0.9 and var.max() < 1.1

    def test_zero_count_rejected(self):
        with pytest.raises(InvalidArgumentError):
            sample_z(0, seed=0)

    def test_stage_isolation(self):
        a = stage_generator(0, "encoder")
        b = stage_generator(0, "adapt")
        assert stage_seed(0, "encoder") != stage_seed(0, "adapt")
        assert not torch.equal(torch.randn(4, generator=a), torch.randn(4, generator=b))


class TestExtendRepeat:
    def test_zero_case(self):
        z = LatentCode(torch.zeros(512))
        out = extend_repeat(z, 14)
        assert out.rows.shape == (14, 512)
        assert torch.equal(out.rows, torch.zeros(14, 512))

    def test_rows_equal_input(self):
        z = sample_z(1, seed=3)[0]
        out = extend_repeat(z, 3)
        for i in range(3):
            assert torch.equal(out.rows[i], z.values)

    def test_identity(self):
        z = sample_z(1, seed=4)[0]
        out = extend_repeat(z, 1)
        assert out.rows.shape == (1, 512)
        assert torch.equal(out.rows[0], z.values)

    @given(st.integers(min_value=1, max_value=20), st.integers(min_value=0, max_value=2**31))
    def test_zero_row_variance_property(self, n, seed):
        z = sample_z(1, seed=seed, dim=16)[0]
        out = extend_repeat(z, n)
        assert out.rows.var(dim=0, unbiased=False).max() == 0
        assert out.is_repeated()


class TestStackZplus:
    def test_consistent_with_repeat(self):
        z = sample_z(1, seed=5)[0]
        stacked = stack_zplus([z, z])
        assert torch.equal(stacked.rows, extend_repeat(z, 2).rows)

    def test_order_preserved(self):
        z1, z2 = sample_z(2, seed=6)
        out = stack_zplus([z1, z2])
        assert out.rows.shape == (2, 512)
        assert torch.equal(out.rows[0], z1.values)
        assert torch.equal(out.rows[1], z2.values)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            stack_zplus([])

    def test_generator_length_mismatch_rejected(self):
        codes = sample_z(3, seed=0)
        with pytest.raises(InvalidArgumentError):
            stack_zplus(codes, expected_n=4)


class TestLayerCount:
    @pytest.mark.parametrize("resolution,expected", [(1024, 18), (256, 14), (64, 10)])
    def test_anchor_points(self, resolution, expected):
        assert layer_count(resolution) == expected

    def test_non_power_of_two_rejected(self):
        for bad in (0, 4, 12, 100, -8):
            with pytest.raises(InvalidArgumentError):
                layer_count(bad)

    def test_strictly_increasing(self):
        values = [layer_count(2**k) for k in range(3, 12)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_resolution_spec(self):
        spec = ResolutionSpec.from_resolution(256)
        assert spec.n == 14
        with pytest.raises(InvalidArgumentError):
            ResolutionSpec(resolution=256, n=13)


def test_repeat_batch_shape():
    z = torch.randn(5, 8)
    out = repeat_batch(z, 6)
    assert out.shape == (5, 6, 8)
    assert torch.equal(out[:, 0, :], z)
    assert torch.equal(out[:, 5, :], z)


def test_extended_latent_validation():
    with pytest.raises(InvalidArgumentError):
        ExtendedLatent(torch.zeros(0, 4))
    with pytest.raises(InvalidArgumentError):
        ExtendedLatent(torch.zeros(4))
