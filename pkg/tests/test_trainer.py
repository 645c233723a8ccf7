"""Tests for batching, training and the gradient check."""

import json

import numpy as np
import pytest

from ordinal_ts.core.encoder import EncoderConfig, EncoderKind, forward_batch, init_model, stack_segments
from ordinal_ts.core.labels import LabelSpace
from ordinal_ts.core.models import Segment
from ordinal_ts.core.objective import LossConfig, hinge_clearance, sample_triplets
from ordinal_ts.core.optimizers import SGD, Adam, OptimizerConfig, OptimizerKind, create_optimizer
from ordinal_ts.core.trainer import (
    LossKind,
    TrainConfig,
    check_training_labels,
    grad_check,
    stratified_batches,
    train,
)


def separable_segments(n_per_class=20, window_length=4, n_channels=2, seed=0):
    """Two classes whose segments sit around +1 and -1."""
    rng = np.random.default_rng(seed)
    segments = []
    for k in range(2 * n_per_class):
        label, offset = ("lo", -1.0) if k % 2 == 0 else ("hi", 1.0)
        values = offset + 0.3 * rng.standard_normal((window_length, n_channels))
        segments.append(Segment(values=values, label=label, source_index=k))
    return segments


@pytest.fixture
def two_class_space():
    return LabelSpace.from_names(["lo", "hi"])


class TestStratifiedBatches:
    """Class-balanced mini-batches."""

    def test_covers_every_index_once(self):
        labels = ["a"] * 7 + ["b"] * 3 + ["c"] * 5
        batches = stratified_batches(labels, 4, np.random.default_rng(0), ["a", "b", "c"])
        flat = np.concatenate(batches)
        assert sorted(flat.tolist()) == list(range(15))
        assert all(len(b) <= 4 for b in batches)

    def test_round_robin_interleaving(self):
        labels = ["a", "b"] * 6
        batches = stratified_batches(labels, 4, np.random.default_rng(1), ["a", "b"])
        for batch in batches:
            got = [labels[k] for k in batch]
            assert got.count("a") == got.count("b") == 2

    def test_deterministic(self):
        labels = ["a", "b", "c"] * 5
        x = stratified_batches(labels, 5, np.random.default_rng(3), ["a", "b", "c"])
        y = stratified_batches(labels, 5, np.random.default_rng(3), ["a", "b", "c"])
        assert all(np.array_equal(u, v) for u, v in zip(x, y))


class TestTrainConfig:
    """Configuration plumbing."""

    def test_from_settings(self, test_settings):
        cfg = TrainConfig.from_settings(test_settings, epochs=7, seed=None)
        assert cfg.epochs == 7
        assert cfg.batch_size == test_settings.batch_size
        assert cfg.seed == 0
        assert cfg.loss_cfg.margin == test_settings.margin

    def test_rejects_tiny_batches(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1)


class TestOptimizers:
    """Update rules."""

    def test_sgd_step(self):
        opt = create_optimizer(OptimizerConfig(kind=OptimizerKind.SGD), 0.5)
        assert isinstance(opt, SGD)
        np.testing.assert_allclose(opt.step(np.array([1.0, 2.0]), np.array([2.0, -2.0])), [0.0, 3.0])

    def test_adam_first_step_moves_by_learning_rate(self):
        opt = create_optimizer(OptimizerConfig(), 0.1)
        assert isinstance(opt, Adam)
        updated = opt.step(np.zeros(3), np.array([4.0, -0.5, 0.0]))
        np.testing.assert_allclose(updated, [-0.1, 0.1, 0.0], atol=1e-6)


class TestTrain:
    """End-to-end optimization behavior."""

    def test_triplet_loss_decreases(self, two_class_space):
        model = init_model(EncoderConfig(kind="mean_pool_mlp", n_channels=2, hidden_dim=8, embed_dim=3, window_length=4, seed=1))
        cfg = TrainConfig(
            batch_size=10,
            learning_rate=0.01,
            epochs=50,
            loss_kind=LossKind.TRIPLET_ONLY,
            loss_cfg=LossConfig(margin=1.0),
            seed=2,
        )
        _, report = train(model, separable_segments(), cfg, two_class_space)
        losses = report.mean_losses
        assert len(losses) == 50
        assert losses[0] > 0
        assert losses[-1] < losses[0]

    def test_same_seed_is_bitwise_identical(self, small_synthetic, test_settings):
        cfg_data, segments = small_synthetic
        space = LabelSpace.from_names(cfg_data.class_names)
        enc = EncoderConfig.from_settings(test_settings, n_channels=2, window_length=5, seed=4)
        cfg = TrainConfig.from_settings(test_settings, batch_size=15, seed=9)

        a, report_a = train(init_model(enc), segments, cfg, space)
        b, report_b = train(init_model(enc), segments, cfg, space)
        assert a.parameters.tobytes() == b.parameters.tobytes()
        assert report_a.mean_losses == report_b.mean_losses

    def test_writes_epoch_log(self, small_synthetic, test_settings, tmp_path):
        cfg_data, segments = small_synthetic
        space = LabelSpace.from_names(cfg_data.class_names)
        enc = EncoderConfig.from_settings(test_settings, n_channels=2, window_length=5)
        seen = []
        log_path = tmp_path / "logs" / "train_log.jsonl"
        train(
            init_model(enc),
            segments,
            TrainConfig.from_settings(test_settings),
            space,
            log_path=log_path,
            progress_callback=lambda epoch, total: seen.append((epoch, total)),
        )
        lines = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [line["epoch"] for line in lines] == [1, 2]
        assert all(line["tuples"] > 0 for line in lines)
        assert seen == [(1, 2), (2, 2)]

    def test_missing_class_in_training_data(self, make_segments, space5):
        space = space5.with_missing(["c3"])
        segments = make_segments(["c1", "c3", "c2"])
        with pytest.raises(ValueError, match="missing class"):
            check_training_labels(segments, space)
        model = init_model(EncoderConfig(kind="mean_pool_mlp", n_channels=2, hidden_dim=3, embed_dim=2, window_length=4))
        with pytest.raises(ValueError, match="missing class"):
            train(model, segments, TrainConfig(batch_size=2, epochs=1), space)

    def test_unlabeled_segment(self, space5):
        with pytest.raises(ValueError, match="no label"):
            check_training_labels([Segment(values=np.zeros((2, 1)))], space5)

    def test_empty_data(self, mlp_model, space5):
        with pytest.raises(ValueError, match="empty"):
            train(mlp_model, [], TrainConfig(), space5)


class TestGradCheck:
    """Analytic versus numeric gradients through the full loss."""

    def test_random_small_configurations(self, make_segments):
        rng = np.random.default_rng(2024)
        for trial in range(20):
            kind = EncoderKind.BI_RECURRENT if trial % 2 else EncoderKind.MEAN_POOL_MLP
            loss_kind = LossKind.TRIPLET_ONLY if trial % 4 >= 2 else LossKind.ORDINAL_QUADRUPLET
            n_classes = int(rng.integers(3, 5))
            names = [f"c{k}" for k in range(1, n_classes + 1)]
            labels = [name for name in names for _ in range(int(rng.integers(2, 4)))]
            cfg = EncoderConfig(
                kind=kind,
                n_channels=int(rng.integers(1, 4)),
                hidden_dim=int(rng.integers(2, 5)),
                embed_dim=int(rng.integers(2, 5)),
                window_length=int(rng.integers(2, 5)),
                seed=trial,
            )
            segments = make_segments(labels, window_length=cfg.window_length, n_channels=cfg.n_channels, seed=trial)
            error = grad_check(
                init_model(cfg),
                segments,
                TrainConfig(loss_kind=loss_kind, seed=trial, max_per_anchor=3),
                LabelSpace.from_names(names),
            )
            assert error < 1e-4, f"trial {trial}: {kind.value}/{loss_kind.value} error {error:.3e}"

    def test_tuple_sitting_on_the_hinge_kink(self, make_segments, rnn_model):
        names = ["c1", "c2", "c3", "c4"]
        segments = make_segments([n for n in names for _ in range(3)], window_length=3, seed=19)
        labels = [s.label for s in segments]
        features = forward_batch(rnn_model, stack_segments(rnn_model, segments)).features
        drawn = sample_triplets(labels, np.random.default_rng(5), 3)
        idx = np.array([[t.a, t.p, t.n] for t in drawn.triplets])
        gap = (np.sum((features[idx[:, 2]] - features[idx[:, 0]]) ** 2, axis=1)
               - np.sum((features[idx[:, 1]] - features[idx[:, 0]]) ** 2, axis=1))
        target = int(np.argmax(gap))
        assert gap[target] > 0
        loss_cfg = LossConfig(margin=float(gap[target]) + 1.03e-5)
        cfg = TrainConfig(loss_kind=LossKind.TRIPLET_ONLY, seed=5, max_per_anchor=3, loss_cfg=loss_cfg)

        _, clearance = hinge_clearance(features, drawn, loss_cfg)
        assert clearance[target] == pytest.approx(1.03e-5, abs=1e-9)
        assert grad_check(rnn_model, segments, cfg, LabelSpace.from_names(names)) < 1e-4

    def test_single_label_batch_is_a_no_op(self, make_segments, mlp_model, space5):
        segments = make_segments(["c2"] * 4)
        assert grad_check(mlp_model, segments, TrainConfig(), space5) == 0.0

    def test_parameter_limit(self, space5, make_segments):
        big = init_model(EncoderConfig(kind="mean_pool_mlp", n_channels=2, hidden_dim=200, embed_dim=16, window_length=4))
        with pytest.raises(ValueError, match="limited"):
            grad_check(big, make_segments(["c1", "c2"]), TrainConfig(), space5)
