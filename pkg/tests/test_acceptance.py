"""
Desk-scale reproductions on synthetic ordinal streams.

These train full models and take minutes; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest

from ordinal_ts.config.settings import Settings
from ordinal_ts.core.encoder import EncoderConfig, init_model
from ordinal_ts.core.retrieval import build_store, order_preservation
from ordinal_ts.core.trainer import LossKind, TrainConfig, train
from ordinal_ts.data.synthetic import generate, synthetic_space
from ordinal_ts.data.utils.models import SyntheticConfig
from ordinal_ts.harness.experiment import ExperimentSpec, Method, run_experiment

pytestmark = pytest.mark.slow

MODEL_FIELDS = dict(
    encoder_kind="mean_pool_mlp",
    hidden_dim=32,
    embed_dim=16,
    epochs=40,
    batch_size=128,
    learning_rate=0.005,
    max_per_anchor=4,
)


def ten_class_stream(run_length=1, seed=0):
    cfg = SyntheticConfig(
        n_classes=10,
        n_channels=3,
        segment_length=10,
        segments_per_class=100,
        run_length=run_length,
        seed=seed,
    )
    return generate(cfg), synthetic_space(cfg)


def run(method, n_missing, dataset, space, window_sizes=(0,)):
    spec = ExperimentSpec(
        protocol="nonconsecutive",
        n_missing=n_missing,
        n_repeats=5,
        window_sizes=list(window_sizes),
        method=method,
        seed=100,
        standardize=True,
        **MODEL_FIELDS,
    )
    return run_experiment(spec, dataset, space, settings=Settings())


@pytest.fixture(scope="module")
def two_missing():
    dataset, space = ten_class_stream()
    return {
        method: run(method, 2, dataset, space)
        for method in (Method.OURS_OQ, Method.TRIPLET_INTERPOLATION)
    }


class TestOrderPreservation:
    """Centroid geometry follows the ordinal label distances."""

    def test_quadruplet_beats_triplet(self):
        cfg = SyntheticConfig(n_classes=8, n_channels=3, segment_length=10, segments_per_class=100, seed=4)
        segments = generate(cfg)
        space = synthetic_space(cfg)
        encoder = EncoderConfig(kind="mean_pool_mlp", n_channels=3, hidden_dim=32, embed_dim=16, window_length=10, seed=4)

        correlations = {}
        for kind in (LossKind.ORDINAL_QUADRUPLET, LossKind.TRIPLET_ONLY):
            cfg_train = TrainConfig(batch_size=256, learning_rate=0.005, epochs=30, loss_kind=kind, seed=4)
            model, _ = train(init_model(encoder), segments, cfg_train, space)
            correlations[kind] = order_preservation(build_store(model, segments, space), space)

        assert correlations[LossKind.ORDINAL_QUADRUPLET] >= 0.9
        assert correlations[LossKind.TRIPLET_ONLY] < correlations[LossKind.ORDINAL_QUADRUPLET]


class TestMissingClassRecovery:
    """Two nonconsecutive missing classes out of ten."""

    def test_repeats_share_missing_sets(self, two_missing):
        ours, baseline = two_missing[Method.OURS_OQ], two_missing[Method.TRIPLET_INTERPOLATION]
        assert [r.missing for r in ours.repeats] == [r.missing for r in baseline.repeats]

    def test_missing_accuracy(self, two_missing):
        ours, baseline = two_missing[Method.OURS_OQ], two_missing[Method.TRIPLET_INTERPOLATION]
        assert ours.aggregates[0].missing_mean >= 0.6
        for a, b in zip(ours.repeats, baseline.repeats):
            assert a.window(0).missing_accuracy > b.window(0).missing_accuracy, f"repeat {a.repeat}"

    def test_overall_accuracy(self, two_missing):
        ours, baseline = two_missing[Method.OURS_OQ], two_missing[Method.TRIPLET_INTERPOLATION]
        assert ours.aggregates[0].overall_mean >= baseline.aggregates[0].overall_mean


class TestWindowCorrection:
    """Majority-rule smoothing over label-constant test runs."""

    def test_windows_do_not_hurt_missing_accuracy(self):
        dataset, space = ten_class_stream(run_length=30, seed=1)
        report = run(Method.OURS_OQ, 2, dataset, space, window_sizes=(0, 10, 30))
        means = {a.window: a.missing_mean for a in report.aggregates}
        assert means[10] >= means[0]
        assert means[30] >= means[0]


class TestNegativeAblation:
    """Triplet embeddings lack the ordinal structure the test relies on."""

    def test_triplet_with_test_trails_interpolation(self):
        dataset, space = ten_class_stream(seed=2)
        with_test = run(Method.TRIPLET_WITH_TEST, 1, dataset, space)
        interpolation = run(Method.TRIPLET_INTERPOLATION, 1, dataset, space)
        assert with_test.aggregates[0].overall_mean < interpolation.aggregates[0].overall_mean
        assert np.isfinite([r.final_loss for r in with_test.repeats]).all()


class TestDecisionDiagnostics:
    """The missing-class test separates held-out classes from present ones."""

    def test_power_exceeds_type_one_rate(self, two_missing):
        for repeat in two_missing[Method.OURS_OQ].repeats:
            assert repeat.power is not None and repeat.type_one_rate is not None
            assert repeat.power > repeat.type_one_rate, f"repeat {repeat.repeat}"
