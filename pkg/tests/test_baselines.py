"""Tests for DeepONet, Fourier-feature and MLP/SIREN comparison models."""

import numpy as np
import pytest
from pydantic import ValidationError

from nifkit.baselines import (
    MLP_PRESETS,
    WAVE_DEEPONET,
    DeepONetConfig,
    FourierFeatureConfig,
    deeponet_forward,
    fourier_features,
    fourier_forward,
    matched_siren_width,
    mlp_config,
    siren_config,
)
from nifkit.errors import InvalidInputError
from nifkit.nets import Activation, ShapeNetConfig, count_params
from nifkit.numerics import Rng
from nifkit.pointcloud import PointCloudDataset, PointCloudSchema
from nifkit.train import grad_check, spatial_grad_check


def tiny_dataset(seed: int, d_condition: int = 2, d_space: int = 1, rows: int = 6):
    """Un-normalized rows ``(cond, x, u)`` uniform in [-1, 1]."""
    schema = PointCloudSchema(d_param=d_condition - 1, d_time=1, d_space=d_space, d_out=1)
    table = Rng(seed).generator.uniform(-1.0, 1.0, (rows, schema.n_columns))
    return PointCloudDataset(schema=schema, table=table)


def small_deeponet(d_space: int = 1) -> DeepONetConfig:
    return DeepONetConfig(branch_widths=(2, 4, 4), trunk_widths=(d_space, 5, 3))


def small_fourier(sigma: float = 0.5) -> FourierFeatureConfig:
    return FourierFeatureConfig(
        d_condition=2,
        d_space=1,
        n_features=3,
        sigma=sigma,
        net=ShapeNetConfig(d_in=6, width=4, n_blocks=1),
    )


class TestDeepONet:
    """Test the branch/trunk operator network."""

    def test_wave_count(self):
        """Test: the traveling-wave DeepONet has 3,003 trainables."""
        assert count_params(WAVE_DEEPONET) == 3003

    def test_zero_params_predict_zero(self):
        """Test: all-zero parameters give u = 0 everywhere."""
        cfg = small_deeponet()
        u = deeponet_forward(cfg, np.zeros(count_params(cfg)), np.ones((4, 2)), np.ones((4, 1)))
        np.testing.assert_array_equal(u, 0.0)

    def test_forward_matches_model(self):
        """Test: the functional form agrees with the built model."""
        cfg = small_deeponet()
        model = cfg.build(Rng(0))
        c, x = Rng(1).normal((5, 2)), Rng(2).normal((5, 1))
        np.testing.assert_array_equal(deeponet_forward(cfg, model.params, c, x), model.predict(c, x))

    def test_width_rule(self):
        """Test: branch output must be one wider than trunk output."""
        with pytest.raises(ValidationError):
            DeepONetConfig(branch_widths=(1, 4, 3), trunk_widths=(1, 4, 3))

    def test_for_dims(self):
        """Test: input widths follow the dataset, multi-output is rejected."""
        cfg = WAVE_DEEPONET.for_dims(2, 3, 1)
        assert cfg.branch_widths[0] == 2 and cfg.trunk_widths[0] == 3
        with pytest.raises(InvalidInputError):
            WAVE_DEEPONET.for_dims(1, 1, 2)

    @pytest.mark.parametrize("d_space", [1, 2])
    def test_gradients(self, d_space):
        """Test: parameter and spatial gradients match central differences."""
        model = small_deeponet(d_space).build(Rng(3))
        ds = tiny_dataset(4, d_space=d_space)
        assert grad_check(model, ds, h=1e-6).max_rel_error < 1e-6
        spatial = spatial_grad_check(model, ds.conditions, ds.coords, h=1e-6)
        assert spatial.max_rel_error < 1e-6
        assert spatial.analytic.shape == (6, 1, d_space)


class TestFourierFeatures:
    """Test the random Fourier-feature MLP."""

    def test_zero_frequencies(self):
        """Test: sigma = 0 maps every input to [1, ..., 1, 0, ..., 0]."""
        cfg = small_fourier(sigma=0.0)
        b = cfg.sample_frequencies(Rng(0))
        gamma = fourier_features(b, Rng(1).normal((4, 3)))
        np.testing.assert_array_equal(gamma[:, :3], 1.0)
        np.testing.assert_array_equal(gamma[:, 3:], 0.0)

    def test_frequencies_fixed_by_seed(self):
        """Test: equal seeds draw equal frequency matrices."""
        a = small_fourier().build(Rng(5))
        b = small_fourier().build(Rng(5))
        assert a.frequencies.shape == (3, 3)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)

    def test_forward_matches_model(self):
        """Test: the functional form agrees with the built model."""
        cfg = small_fourier()
        model = cfg.build(Rng(6))
        v = Rng(7).normal((4, 3))
        np.testing.assert_array_equal(
            fourier_forward(cfg, model.params, v, model.frequencies),
            model.predict(v[:, :2], v[:, 2:]),
        )

    def test_feature_width_rule(self):
        """Test: the MLP input must be twice the feature count."""
        with pytest.raises(ValidationError):
            FourierFeatureConfig(n_features=4, net=ShapeNetConfig(d_in=6))

    def test_gradients(self):
        """Test: parameter and spatial gradients match central differences."""
        model = small_fourier().build(Rng(8))
        ds = tiny_dataset(9)
        assert grad_check(model, ds, h=1e-6).max_rel_error < 1e-6
        assert spatial_grad_check(model, ds.conditions, ds.coords, h=1e-6).max_rel_error < 1e-6


class TestMLPBaselines:
    """Test MLP presets and the monolithic SIREN."""

    @pytest.mark.parametrize(
        "name,expected",
        [
            ("ks-mlp-1", 7_135),
            ("ks-mlp-2", 10_291),
            ("ks-mlp-3", 20_701),
            ("ks-mlp-4", 24_971),
            ("ks-mlp-5", 34_711),
        ],
    )
    def test_size_sweep(self, name, expected):
        """Test: every MLP size preset has its published count."""
        assert count_params(MLP_PRESETS[name]) == expected

    def test_dash_layouts(self):
        """Test: dash layouts need equal hidden widths in pairs."""
        cfg = mlp_config((3, 100, 1), 2, Activation())
        assert cfg.net.n_blocks == 0
        with pytest.raises(InvalidInputError):
            mlp_config((3, 100, 100, 90, 1), 2, Activation())
        with pytest.raises(InvalidInputError):
            mlp_config((3, 100, 100, 1), 2, Activation())

    def test_siren(self):
        """Test: the monolithic SIREN is a sine MLP over [t, x]."""
        assert matched_siren_width(56) == 77
        cfg = siren_config(matched_siren_width(56))
        assert cfg.net.d_in == 2 and cfg.net.width == 77
        assert cfg.net.activation.kind == "sine"
        model = cfg.build(Rng(0))
        assert model.d_condition == 1 and model.d_space == 1
