"""
Missing-class experiments: repeated sample / split / train / classify / score runs.
"""

import logging
import math
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from sklearn.metrics import confusion_matrix

from ..config.settings import Settings, load_settings
from ..core.encoder import EmbeddingModel, EncoderConfig, EncoderKind, embed_batch, init_model
from ..core.labels import LabelDistanceKind, LabelSpace
from ..core.models import Segment
from ..core.objective import LossConfig
from ..core.retrieval import (
    Branch,
    EmbeddingStore,
    PredictionTrace,
    baseline_predict,
    build_label_rank_matrix,
    build_store,
    class_distance_matrix,
    classify,
    interpolate_missing,
    knn_predict,
    order_preservation,
    pairwise_centroid_distances,
    window_correct,
)
from ..core.stats import Decision, RankStatKind, TestConfig
from ..core.trainer import LossKind, TrainConfig, check_training_labels, train
from ..data.scaling import ChannelScaler
from ..data.split import split_holdout
from .protocols import Protocol, check_feasible, sample_missing_set

logger = logging.getLogger(__name__)

CI_Z = 1.96


class Method(str, Enum):
    """Training objective plus inference rule."""
    OURS_OQ = "ours_oq"
    TRIPLET_INTERPOLATION = "triplet_interpolation"
    TRIPLET_WITH_TEST = "triplet_with_test"

    @property
    def loss_kind(self) -> LossKind:
        if self is Method.OURS_OQ:
            return LossKind.ORDINAL_QUADRUPLET
        return LossKind.TRIPLET_ONLY


class ExperimentSpec(BaseModel):
    """One experiment; unset model fields fall back to Settings in ``resolve``."""
    protocol: Protocol = Protocol.NONCONSECUTIVE
    n_missing: int = Field(default=1, ge=1)
    n_repeats: int = Field(default=5, ge=1)
    window_sizes: List[int] = Field(default_factory=lambda: [0])
    method: Method = Method.OURS_OQ
    seed: int = Field(default=0, description="Base seed; repeat r uses seed + r unless seeds is given")
    seeds: Optional[List[int]] = None
    test_fraction: float = Field(default=0.3, gt=0, lt=1)
    include_reference: bool = False
    standardize: Optional[bool] = None

    alpha: Optional[float] = Field(default=None, gt=0, lt=1)
    stat: Optional[RankStatKind] = None
    knn_k: Optional[int] = Field(default=None, ge=1)
    label_distance: Optional[LabelDistanceKind] = None

    encoder_kind: Optional[EncoderKind] = None
    hidden_dim: Optional[int] = Field(default=None, ge=1)
    embed_dim: Optional[int] = Field(default=None, ge=1)
    epochs: Optional[int] = Field(default=None, ge=1)
    batch_size: Optional[int] = Field(default=None, ge=2)
    learning_rate: Optional[float] = Field(default=None, gt=0)
    max_per_anchor: Optional[int] = Field(default=None, ge=1)
    margin: Optional[float] = Field(default=None, ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("window_sizes")
    @classmethod
    def validate_window_sizes(cls, v: List[int]) -> List[int]:
        """Non-negative, deduplicated, ascending."""
        if not v:
            raise ValueError("window_sizes must not be empty")
        if any(w < 0 for w in v):
            raise ValueError(f"Window sizes must be >= 0, got {v}")
        return sorted(set(v))

    @model_validator(mode="after")
    def validate_seeds(self) -> "ExperimentSpec":
        if self.seeds is not None and len(self.seeds) != self.n_repeats:
            raise ValueError(f"Got {len(self.seeds)} seeds for {self.n_repeats} repeats")
        return self

    def repeat_seeds(self) -> List[int]:
        return list(self.seeds) if self.seeds is not None else [self.seed + r for r in range(self.n_repeats)]

    def resolve(self, settings: Settings) -> "ExperimentSpec":
        """Copy with every optional field filled from settings."""
        defaults = {
            "alpha": settings.alpha,
            "stat": RankStatKind(settings.rank_stat),
            "knn_k": settings.knn_k,
            "label_distance": LabelDistanceKind(settings.label_distance),
            "encoder_kind": EncoderKind(settings.encoder_kind),
            "hidden_dim": settings.hidden_dim,
            "embed_dim": settings.embed_dim,
            "epochs": settings.epochs,
            "batch_size": settings.batch_size,
            "learning_rate": settings.learning_rate,
            "max_per_anchor": settings.max_per_anchor,
            "margin": settings.margin,
            "standardize": settings.standardize,
        }
        update = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        return self.model_copy(update=update)


class WindowResult(BaseModel):
    """Scores after window correction with one window size."""
    window: int
    missing_accuracy: float = Field(ge=0, le=1)
    overall_accuracy: float = Field(ge=0, le=1)
    confusion: List[List[int]]


class RepeatResult(BaseModel):
    """Everything measured in one repeat."""
    repeat: int
    seed: int
    missing: List[str]
    n_train: int
    n_test: int
    final_loss: float
    windows: List[WindowResult]
    test_decisions: int = 0
    type_one_rate: Optional[float] = None
    power: Optional[float] = None
    order_preservation: float
    centroid_classes: List[str]
    centroid_distances: List[List[float]]
    class_distances: List[List[Optional[float]]]
    reference_overall_accuracy: Optional[float] = None
    reference_missing_accuracy: Optional[float] = None
    traces: List[Dict[str, Any]] = Field(default_factory=list, exclude=True)

    def window(self, w: int) -> WindowResult:
        for result in self.windows:
            if result.window == w:
                return result
        raise KeyError(f"No result for window {w}")


class Aggregate(BaseModel):
    """Mean and normal-approximation CI across repeats for one window size."""
    window: int
    missing_mean: float
    missing_ci: Tuple[float, float]
    overall_mean: float
    overall_ci: Tuple[float, float]


class ExperimentReport(BaseModel):
    """Per-repeat results plus aggregates."""
    spec: ExperimentSpec
    classes: List[str]
    ordinals: List[int]
    repeats: List[RepeatResult] = Field(default_factory=list)
    aggregates: List[Aggregate] = Field(default_factory=list)


def confidence_interval(values: Sequence[float]) -> Tuple[float, Tuple[float, float]]:
    """Mean and mean +/- 1.96 standard errors (zero width for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, (mean, mean)
    half = CI_Z * float(values.std(ddof=1)) / math.sqrt(values.size)
    return mean, (mean - half, mean + half)


def aggregate(repeats: Sequence[RepeatResult], window_sizes: Sequence[int]) -> List[Aggregate]:
    rows = []
    for w in window_sizes:
        missing_mean, missing_ci = confidence_interval([r.window(w).missing_accuracy for r in repeats])
        overall_mean, overall_ci = confidence_interval([r.window(w).overall_accuracy for r in repeats])
        rows.append(Aggregate(
            window=w,
            missing_mean=missing_mean,
            missing_ci=missing_ci,
            overall_mean=overall_mean,
            overall_ci=overall_ci,
        ))
    return rows


def score(
    true_labels: Sequence[str],
    predicted: Sequence[str],
    space: LabelSpace,
    window: int,
) -> WindowResult:
    """Accuracies and the confusion matrix (rows true, columns predicted, ordinal order)."""
    cm = confusion_matrix(list(true_labels), list(predicted), labels=list(space.domain))
    correct = sum(t == p for t, p in zip(true_labels, predicted))
    if int(np.trace(cm)) != correct:
        raise RuntimeError(f"Confusion trace {int(np.trace(cm))} disagrees with {correct} correct predictions")

    missing_mask = np.array([space.is_missing(t) for t in true_labels], dtype=bool)
    hits = np.array([t == p for t, p in zip(true_labels, predicted)], dtype=bool)
    missing_accuracy = float(hits[missing_mask].mean()) if missing_mask.any() else 0.0
    return WindowResult(
        window=window,
        missing_accuracy=missing_accuracy,
        overall_accuracy=correct / len(true_labels),
        confusion=cm.astype(int).tolist(),
    )


def decision_diagnostics(traces: Sequence[PredictionTrace], space: LabelSpace) -> Tuple[int, Optional[float], Optional[float]]:
    """
    Empirical type-I rate and power of the missing-class test.

    Type-I rate counts rejections among test-branch decisions on present-class
    samples; power counts rejections among those on missing-class samples.
    """
    tested = [t for t in traces if t.branch is Branch.TEST]
    present = [t for t in tested if not space.is_missing(t.true_label)]
    absent = [t for t in tested if space.is_missing(t.true_label)]

    def rate(group):
        if not group:
            return None
        return sum(t.decision is Decision.REJECT_TO_MISSING for t in group) / len(group)

    return len(tested), rate(present), rate(absent)


def standardize_split(
    spec: ExperimentSpec,
    train_segments: Sequence[Segment],
    test: Sequence[Segment],
) -> Tuple[List[Segment], List[Segment]]:
    """Scale both sides with channel statistics of the training side when standardization is enabled."""
    if not spec.standardize:
        return list(train_segments), list(test)
    scaler = ChannelScaler.fit(train_segments)
    return scaler.transform(train_segments), scaler.transform(test)


def fit_model(
    spec: ExperimentSpec,
    train_segments: Sequence[Segment],
    space: LabelSpace,
    seed: int,
    loss_kind: LossKind,
) -> Tuple[EmbeddingModel, float]:
    """Initialize and train an encoder for one repeat; returns (model, final epoch loss)."""
    check_training_labels(train_segments, space)
    first = train_segments[0]
    encoder_cfg = EncoderConfig(
        kind=spec.encoder_kind,
        n_channels=first.n_channels,
        hidden_dim=spec.hidden_dim,
        embed_dim=spec.embed_dim,
        window_length=first.window_length,
        seed=seed,
    )
    train_cfg = TrainConfig(
        batch_size=spec.batch_size,
        learning_rate=spec.learning_rate,
        epochs=spec.epochs,
        loss_kind=loss_kind,
        seed=seed,
        loss_cfg=LossConfig(margin=spec.margin),
        max_per_anchor=spec.max_per_anchor,
    )
    model, report = train(init_model(encoder_cfg), train_segments, train_cfg, space)
    return model, report.records[-1].mean_loss


def predict_stream(
    spec: ExperimentSpec,
    model: EmbeddingModel,
    store: EmbeddingStore,
    test: Sequence[Segment],
    space: LabelSpace,
) -> Tuple[List[str], List[PredictionTrace]]:
    """Labels for the test stream in order, plus traces for the rank-based methods."""
    features = embed_batch(model, test)
    if spec.method is Method.TRIPLET_INTERPOLATION:
        augmented = interpolate_missing(store, space)
        return [baseline_predict(augmented, f) for f in features], []

    L = build_label_rank_matrix(space)
    test_cfg = TestConfig(alpha=spec.alpha)
    traces = []
    for segment, f in zip(test, features):
        trace = classify(store, L, f, space, spec.stat, test_cfg, spec.knn_k)
        trace.source_index = segment.source_index
        trace.true_label = segment.label
        traces.append(trace)
    return [t.label for t in traces], traces


def run_reference(
    spec: ExperimentSpec,
    dataset: Sequence[Segment],
    base: LabelSpace,
    seed: int,
    missing: Sequence[str],
) -> Tuple[float, float]:
    """Same repeat trained with every class present; returns (overall, accuracy on ``missing``)."""
    train_segments, test = standardize_split(spec, *split_holdout(dataset, spec.test_fraction, (), seed))
    model, _ = fit_model(spec, train_segments, base, seed, spec.method.loss_kind)
    store = build_store(model, train_segments, base)
    features = embed_batch(model, test)
    predicted = [knn_predict(store, f, spec.knn_k) for f in features]
    truth = [s.label for s in test]
    hits = np.array([t == p for t, p in zip(truth, predicted)], dtype=bool)
    mask = np.array([t in set(missing) for t in truth], dtype=bool)
    return float(hits.mean()), float(hits[mask].mean()) if mask.any() else 0.0


def run_repeat(
    spec: ExperimentSpec,
    dataset: Sequence[Segment],
    base: LabelSpace,
    repeat: int,
    seed: int,
) -> RepeatResult:
    """One sample / split / train / classify / score cycle."""
    rng = np.random.default_rng(seed)
    missing = sample_missing_set(spec.protocol, base.domain, spec.n_missing, rng)
    space = base.with_missing(missing)
    train_segments, test = split_holdout(dataset, spec.test_fraction, missing, seed)
    if any(s.label in space.missing for s in train_segments):
        raise RuntimeError(f"Repeat {repeat}: missing-class data reached the training split")
    logger.info(f"Repeat {repeat} (seed {seed}): missing {missing}, {len(train_segments)} train / {len(test)} test")
    train_segments, test = standardize_split(spec, train_segments, test)

    model, final_loss = fit_model(spec, train_segments, space, seed, spec.method.loss_kind)
    store = build_store(model, train_segments, space)
    predicted, traces = predict_stream(spec, model, store, test, space)
    truth = [s.label for s in test]

    windows = [score(truth, window_correct(predicted, w, space), space, w) for w in spec.window_sizes]
    n_tested, type_one, power = decision_diagnostics(traces, space)

    all_segments = list(train_segments) + list(test)
    class_distances = class_distance_matrix(embed_batch(model, all_segments), [s.label for s in all_segments], space)

    result = RepeatResult(
        repeat=repeat,
        seed=seed,
        missing=missing,
        n_train=len(train_segments),
        n_test=len(test),
        final_loss=final_loss,
        windows=windows,
        test_decisions=n_tested,
        type_one_rate=type_one,
        power=power,
        order_preservation=order_preservation(store, space),
        centroid_classes=list(store.classes),
        centroid_distances=pairwise_centroid_distances(store).tolist(),
        class_distances=[[None if np.isnan(v) else float(v) for v in row] for row in class_distances],
        traces=[t.to_record() for t in traces],
    )
    if spec.include_reference:
        overall, on_missing = run_reference(spec, dataset, base, seed, missing)
        result.reference_overall_accuracy = overall
        result.reference_missing_accuracy = on_missing

    w0 = windows[0]
    logger.info(
        f"Repeat {repeat}: missing accuracy {w0.missing_accuracy:.3f}, overall {w0.overall_accuracy:.3f} (w={w0.window})"
    )
    return result


def run_experiment(
    spec: ExperimentSpec,
    dataset: Sequence[Segment],
    space: LabelSpace,
    settings: Optional[Settings] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> ExperimentReport:
    """
    Run every repeat of an experiment.

    Repeats run sequentially; each is deterministic given its seed.

    Args:
        spec: Experiment description
        dataset: Labeled segments covering every class of ``space``
        space: Label domain (its missing set is ignored)
        settings: Fallbacks for unset spec fields
        progress_callback: Called with (finished repeats, total)

    Returns:
        ExperimentReport with per-repeat results and aggregates
    """
    if spec.label_distance is None:
        spec = spec.model_copy(update={"label_distance": space.label_distance})
    spec = spec.resolve(settings or load_settings())
    custom = spec.label_distance is LabelDistanceKind.CUSTOM
    base = LabelSpace(
        domain=space.domain,
        ordinals=space.ordinals,
        missing=frozenset(),
        label_distance=spec.label_distance,
        custom_table=space.custom_table if custom else None,
    )
    check_feasible(spec.protocol, len(base), spec.n_missing)

    seen = {s.label for s in dataset}
    uncovered = [c for c in base.domain if c not in seen]
    if uncovered:
        raise ValueError(f"Dataset has no segments for classes {uncovered}")
    unknown = sorted(seen - set(base.domain))
    if unknown:
        raise ValueError(f"Dataset contains labels {unknown} outside the label domain")

    logger.info(
        f"Experiment: {spec.method.value}, {spec.protocol.value}, {spec.n_missing} missing, "
        f"{spec.n_repeats} repeats over {len(dataset)} segments"
    )
    report = ExperimentReport(spec=spec, classes=list(base.domain), ordinals=list(base.ordinals))
    seeds = spec.repeat_seeds()
    for r, seed in enumerate(seeds):
        report.repeats.append(run_repeat(spec, dataset, base, r, seed))
        if progress_callback:
            progress_callback(r + 1, len(seeds))

    report.aggregates = aggregate(report.repeats, spec.window_sizes)
    return report
