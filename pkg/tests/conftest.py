"""Test configuration and fixtures for the ordinal time-series toolkit."""

import numpy as np
import pytest

from ordinal_ts.config.settings import Settings
from ordinal_ts.core.encoder import EncoderConfig, EncoderKind, init_model
from ordinal_ts.core.labels import LabelSpace
from ordinal_ts.core.models import Segment
from ordinal_ts.data.synthetic import generate
from ordinal_ts.data.utils.models import SyntheticConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale reproductions that train full models")


@pytest.fixture
def unit_rows():
    """Factory for random unit-norm rows."""
    def _rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
        x = rng.standard_normal((n, dim))
        return x / np.linalg.norm(x, axis=1, keepdims=True)
    return _rows


@pytest.fixture
def test_settings():
    """Settings sized for fast tests."""
    return Settings(
        batch_size=32,
        learning_rate=0.01,
        epochs=2,
        hidden_dim=8,
        embed_dim=4,
        window_length=5,
        encoder_kind="mean_pool_mlp",
        max_per_anchor=2,
    )


@pytest.fixture
def space5():
    """Five ordinal classes c1..c5, nothing missing."""
    return LabelSpace.from_names(["c1", "c2", "c3", "c4", "c5"])


@pytest.fixture
def mlp_config():
    return EncoderConfig(kind=EncoderKind.MEAN_POOL_MLP, n_channels=2, hidden_dim=4, embed_dim=3, window_length=4, seed=7)


@pytest.fixture
def rnn_config():
    return EncoderConfig(kind=EncoderKind.BI_RECURRENT, n_channels=2, hidden_dim=3, embed_dim=3, window_length=3, seed=11)


@pytest.fixture
def mlp_model(mlp_config):
    return init_model(mlp_config)


@pytest.fixture
def rnn_model(rnn_config):
    return init_model(rnn_config)


@pytest.fixture
def small_synthetic():
    """Five-class stream with label-constant runs."""
    cfg = SyntheticConfig(
        n_classes=5,
        n_channels=2,
        segment_length=5,
        segments_per_class=12,
        run_length=3,
        seed=3,
    )
    return cfg, generate(cfg)


@pytest.fixture
def make_segments():
    """Factory for random labeled segments of a given shape."""
    def _make(labels, window_length=4, n_channels=2, seed=0):
        rng = np.random.default_rng(seed)
        return [
            Segment(values=rng.standard_normal((window_length, n_channels)), label=label, source_index=k)
            for k, label in enumerate(labels)
        ]
    return _make
