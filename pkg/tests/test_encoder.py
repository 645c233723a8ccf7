"""Tests for the temporal encoders and checkpoint format."""

import json

import numpy as np
import pytest

from ordinal_ts.core.encoder import (
    DegenerateEmbeddingError,
    EncoderConfig,
    EncoderKind,
    backward,
    embed_batch,
    forward,
    init_model,
    parameter_count,
    parameter_layout,
)
from ordinal_ts.core.models import Segment
from ordinal_ts.core.persistence import MAGIC, load_model, save_model, sidecar_path


def numeric_gradient(model, segment, g, step=1e-5):
    base = model.parameters
    grad = np.zeros_like(base)
    for k in range(base.size):
        plus, minus = base.copy(), base.copy()
        plus[k] += step
        minus[k] -= step
        f_plus = forward(model.with_parameters(plus), segment).components
        f_minus = forward(model.with_parameters(minus), segment).components
        grad[k] = (g @ f_plus - g @ f_minus) / (2 * step)
    return grad


class TestInitModel:
    """Initialization and parameter layout."""

    def test_mlp_parameter_count(self):
        cfg = EncoderConfig(kind=EncoderKind.MEAN_POOL_MLP, n_channels=2, hidden_dim=4, embed_dim=3)
        assert parameter_count(cfg) == 2 * 4 + 4 + 4 * 3 + 3 == 27

    def test_rnn_parameter_count(self):
        cfg = EncoderConfig(kind="bi_recurrent", n_channels=2, hidden_dim=3, embed_dim=4)
        per_direction = 3 * 2 + 3 * 3 + 3
        assert parameter_count(cfg) == 2 * per_direction + 4 * 6 + 4

    def test_same_seed_is_bitwise_identical(self, mlp_config):
        a, b = init_model(mlp_config), init_model(mlp_config)
        assert a.parameters.tobytes() == b.parameters.tobytes()

    def test_different_seeds_differ(self, mlp_config):
        other = mlp_config.model_copy(update={"seed": mlp_config.seed + 1})
        assert not np.array_equal(init_model(mlp_config).parameters, init_model(other).parameters)

    def test_wrong_parameter_count_rejected(self, mlp_model):
        with pytest.raises(ValueError, match="entries"):
            mlp_model.with_parameters(np.zeros(5))

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            EncoderConfig(n_channels=2, seed=-1)

    def test_recurrent_cells_scaled_by_input_plus_state_width(self):
        cfg = EncoderConfig(kind="bi_recurrent", n_channels=5, hidden_dim=4, embed_dim=3, seed=2)
        layout = {name: fan_in for name, _, fan_in in parameter_layout(cfg)}
        for direction in ("fwd", "bwd"):
            for block in ("Wx", "Wh", "b"):
                assert layout[f"{block}_{direction}"] == 9
        assert layout["Wo"] == layout["bo"] == 8
        blocks = init_model(cfg).blocks
        assert np.max(np.abs(blocks["Wx_fwd"])) <= 1 / 3
        assert np.max(np.abs(blocks["Wo"])) <= 1 / np.sqrt(8)

    def test_from_settings(self, test_settings):
        cfg = EncoderConfig.from_settings(test_settings, n_channels=3, hidden_dim=None)
        assert cfg.kind is EncoderKind.MEAN_POOL_MLP
        assert cfg.hidden_dim == test_settings.hidden_dim
        assert cfg.n_channels == 3


class TestForward:
    """Forward pass contract."""

    @pytest.mark.parametrize("model_fixture", ["mlp_model", "rnn_model"])
    def test_unit_norm_and_deterministic(self, request, model_fixture, make_segments):
        model = request.getfixturevalue(model_fixture)
        cfg = model.config
        segments = make_segments(["a"] * 6, window_length=cfg.window_length, n_channels=cfg.n_channels)
        for segment in segments:
            f = forward(model, segment)
            assert np.linalg.norm(f.components) == pytest.approx(1.0, abs=1e-6)
            np.testing.assert_array_equal(f.components, forward(model, segment).components)

    def test_zero_weights_are_degenerate(self, mlp_config, make_segments):
        model = init_model(mlp_config).with_parameters(np.zeros(parameter_count(mlp_config)))
        segment = make_segments(["a"], window_length=4, n_channels=2)[0]
        with pytest.raises(DegenerateEmbeddingError):
            forward(model, segment)

    def test_shape_mismatch(self, mlp_model):
        with pytest.raises(ValueError, match="encoder expects"):
            forward(mlp_model, Segment(values=np.ones((5, 2))))

    def test_embed_batch_matches_forward(self, rnn_model, make_segments):
        segments = make_segments(["a"] * 7, window_length=3, n_channels=2)
        batch = embed_batch(rnn_model, segments, chunk_size=3)
        assert batch.shape == (7, 3)
        for row, segment in zip(batch, segments):
            np.testing.assert_allclose(row, forward(rnn_model, segment).components, atol=1e-12)


class TestBackward:
    """Analytic parameter gradients."""

    def test_zero_output_gradient(self, rnn_model, make_segments):
        segment = make_segments(["a"], window_length=3, n_channels=2)[0]
        grad = backward(rnn_model, segment, np.zeros(3))
        assert grad.shape == rnn_model.parameters.shape
        assert not np.any(grad)

    def test_output_gradient_shape(self, mlp_model, make_segments):
        segment = make_segments(["a"])[0]
        with pytest.raises(ValueError, match="shape"):
            backward(mlp_model, segment, np.zeros(4))

    @pytest.mark.parametrize("model_fixture", ["mlp_model", "rnn_model"])
    def test_matches_finite_differences(self, request, model_fixture, make_segments):
        model = request.getfixturevalue(model_fixture)
        cfg = model.config
        segment = make_segments(["a"], window_length=cfg.window_length, n_channels=cfg.n_channels, seed=5)[0]
        g = np.random.default_rng(1).standard_normal(cfg.embed_dim)

        analytic = backward(model, segment, g)
        numeric = numeric_gradient(model, segment, g)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4

    @pytest.mark.parametrize("model_fixture", ["mlp_model", "rnn_model"])
    def test_linear_in_output_gradient(self, request, model_fixture, make_segments):
        model = request.getfixturevalue(model_fixture)
        cfg = model.config
        segment = make_segments(["a"], window_length=cfg.window_length, n_channels=cfg.n_channels, seed=8)[0]
        rng = np.random.default_rng(3)
        g1, g2 = rng.standard_normal((2, cfg.embed_dim))
        combined = backward(model, segment, 2.5 * g1 - 0.75 * g2)
        separate = 2.5 * backward(model, segment, g1) - 0.75 * backward(model, segment, g2)
        np.testing.assert_allclose(combined, separate, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("model_fixture", ["mlp_model", "rnn_model"])
    def test_gradient_along_feature_vanishes(self, request, model_fixture, make_segments):
        model = request.getfixturevalue(model_fixture)
        cfg = model.config
        segment = make_segments(["a"], window_length=cfg.window_length, n_channels=cfg.n_channels, seed=4)[0]
        f = forward(model, segment).components
        np.testing.assert_allclose(backward(model, segment, -3.0 * f), 0.0, atol=1e-12)

    def test_random_models_match_finite_differences(self, make_segments):
        rng = np.random.default_rng(77)
        for trial in range(24):
            cfg = EncoderConfig(
                kind=EncoderKind.BI_RECURRENT if trial % 2 else EncoderKind.MEAN_POOL_MLP,
                n_channels=int(rng.integers(1, 4)),
                hidden_dim=int(rng.integers(2, 6)),
                embed_dim=int(rng.integers(2, 5)),
                window_length=int(rng.integers(1, 5)),
                seed=trial,
            )
            model = init_model(cfg)
            segment = make_segments(["a"], window_length=cfg.window_length, n_channels=cfg.n_channels, seed=100 + trial)[0]
            g = rng.standard_normal(cfg.embed_dim)

            analytic = backward(model, segment, g)
            numeric = numeric_gradient(model, segment, g)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
            error = np.max(np.abs(analytic - numeric) / denom)
            assert error < 1e-4, f"trial {trial}: {cfg.kind.value} error {error:.3e}"


class TestPersistence:
    """Binary checkpoint plus JSON sidecar."""

    @pytest.mark.parametrize("model_fixture", ["mlp_model", "rnn_model"])
    def test_round_trip(self, request, model_fixture, tmp_path):
        model = request.getfixturevalue(model_fixture)
        path = save_model(model, tmp_path / "model.bin")
        loaded = load_model(path)
        assert loaded.config == model.config
        assert loaded.parameters.tobytes() == model.parameters.tobytes()

        sidecar = json.loads(sidecar_path(path).read_text())
        assert sidecar["parameter_count"] == model.parameters.size
        assert sidecar["config"]["kind"] == model.config.kind.value

    def test_header_starts_with_magic(self, mlp_model, tmp_path):
        path = save_model(mlp_model, tmp_path / "m.bin")
        assert path.read_bytes()[:4] == MAGIC

    def test_bad_magic(self, mlp_model, tmp_path):
        path = save_model(mlp_model, tmp_path / "m.bin")
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_truncated_payload(self, mlp_model, tmp_path):
        path = save_model(mlp_model, tmp_path / "m.bin")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="payload"):
            load_model(path)
