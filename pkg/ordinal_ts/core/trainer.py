"""
Mini-batch training of the encoder under the ordinal-quadruplet or triplet loss.
"""

import json
import logging
import time
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .encoder import EmbeddingModel, backward_batch, forward_batch, parameter_count, stack_segments
from .labels import LabelSpace
from .models import Segment
from .objective import LossConfig, SamplingResult, batch_loss, hinge_clearance, sample_quadruplets, sample_triplets
from .optimizers import OptimizerConfig, create_optimizer

logger = logging.getLogger(__name__)

GRAD_CHECK_MAX_PARAMETERS = 2000


class TrainingDivergedError(ValueError):
    """Raised when an epoch-mean loss is NaN or infinite."""


class LossKind(str, Enum):
    """Training objective."""
    ORDINAL_QUADRUPLET = "ordinal_quadruplet"
    TRIPLET_ONLY = "triplet_only"


class TrainConfig(BaseModel):
    """Optimization settings."""
    batch_size: int = Field(default=256, ge=2, description="Mini-batch size")
    learning_rate: float = Field(default=0.005, gt=0, description="Step size")
    epochs: int = Field(default=30, ge=1, description="Passes over the data")
    loss_kind: LossKind = Field(default=LossKind.ORDINAL_QUADRUPLET)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    seed: int = Field(default=0, description="Shuffling and sampling seed")
    loss_cfg: LossConfig = Field(default_factory=LossConfig)
    max_per_anchor: int = Field(default=4, ge=1, description="Tuples drawn per anchor")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_settings(cls, settings, **overrides) -> "TrainConfig":
        """Fill unspecified fields from settings."""
        values = {
            "batch_size": settings.batch_size,
            "learning_rate": settings.learning_rate,
            "epochs": settings.epochs,
            "max_per_anchor": settings.max_per_anchor,
            "loss_cfg": LossConfig.from_settings(settings),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class EpochRecord(BaseModel):
    """One line of the training log."""
    epoch: int
    mean_loss: float
    tuples: int
    degraded_batches: int
    single_label_batches: int
    wall_time_s: float


class TrainReport(BaseModel):
    """Per-epoch training history."""
    loss_kind: LossKind
    records: List[EpochRecord] = Field(default_factory=list)

    @property
    def mean_losses(self) -> List[float]:
        return [r.mean_loss for r in self.records]

    @property
    def tuple_counts(self) -> List[int]:
        return [r.tuples for r in self.records]

    @property
    def degraded_batches(self) -> List[int]:
        return [r.degraded_batches for r in self.records]

    @property
    def wall_times(self) -> List[float]:
        return [r.wall_time_s for r in self.records]


def check_training_labels(segments: Sequence[Segment], space: LabelSpace) -> None:
    """Every training segment must be labeled with a present class."""
    for segment in segments:
        if segment.label is None:
            raise ValueError(f"Training segment at source index {segment.source_index} has no label")
        if space.is_missing(segment.label):
            raise ValueError(
                f"Training segment at source index {segment.source_index} is labeled {segment.label!r}, "
                f"which is a missing class; missing classes must not reach training"
            )


def stratified_batches(
    labels: Sequence[str],
    batch_size: int,
    rng: np.random.Generator,
    class_order: Sequence[str],
) -> List[np.ndarray]:
    """
    Shuffle within each class, interleave classes round-robin, then cut batches.

    Batches therefore hold roughly batch_size / |N| segments of every class.
    """
    labels = np.asarray(labels, dtype=object)
    queues = [rng.permutation(np.flatnonzero(labels == c)) for c in class_order]
    queues = [q for q in queues if len(q)]
    order = []
    depth = max((len(q) for q in queues), default=0)
    for k in range(depth):
        order.extend(int(q[k]) for q in queues if k < len(q))
    order = np.array(order, dtype=int)
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]


def _sampler(cfg: TrainConfig) -> Callable[..., SamplingResult]:
    if cfg.loss_kind is LossKind.TRIPLET_ONLY:
        return sample_triplets
    return sample_quadruplets


def train(
    model: EmbeddingModel,
    data: Sequence[Segment],
    cfg: TrainConfig,
    space: LabelSpace,
    log_path: Optional[Union[str, Path]] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> Tuple[EmbeddingModel, TrainReport]:
    """
    Optimize the encoder on labeled segments.

    Args:
        model: Initial model
        data: Labeled training segments (labels in N only)
        cfg: Training configuration
        space: Label space
        log_path: Optional JSON-lines file receiving one record per epoch
        progress_callback: Called with (epoch, epochs) after each epoch

    Returns:
        (trained model, report)
    """
    if not data:
        raise ValueError("Training data is empty")
    check_training_labels(data, space)

    inputs = stack_segments(model, data)
    labels = np.array([segment.label for segment in data], dtype=object)
    rng = np.random.default_rng(cfg.seed)
    optimizer = create_optimizer(cfg.optimizer, cfg.learning_rate)
    sampler = _sampler(cfg)
    params = model.parameters.copy()
    report = TrainReport(loss_kind=cfg.loss_kind)

    log_file = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "w", encoding="utf-8")

    logger.info(
        f"Training {model.config.kind.value} encoder on {len(data)} segments "
        f"({cfg.loss_kind.value}, {cfg.epochs} epochs, batch {cfg.batch_size})"
    )
    try:
        for epoch in range(1, cfg.epochs + 1):
            start = time.perf_counter()
            batch_means = []
            tuples = degraded = single_label = 0

            for batch in stratified_batches(labels, cfg.batch_size, rng, space.present):
                current = model.with_parameters(params)
                cache = forward_batch(current, inputs[batch])
                batch_labels = labels[batch].tolist()
                sample = sampler(batch_labels, rng, cfg.max_per_anchor)
                single_label += sample.warnings
                if sample.count == 0:
                    continue
                degraded += int(sample.degraded)

                result = batch_loss(cache.features, batch_labels, sample, cfg.loss_cfg, space)
                grad = backward_batch(current, cache, result.gradients / result.count)
                params = optimizer.step(params, grad)
                batch_means.append(result.mean)
                tuples += result.count

            if not batch_means:
                logger.warning(f"Epoch {epoch}: no batch produced any training tuple")
            mean_loss = float(np.mean(batch_means)) if batch_means else 0.0
            if not np.isfinite(mean_loss) or not np.all(np.isfinite(params)):
                raise TrainingDivergedError(f"Epoch {epoch} produced a non-finite loss ({mean_loss})")

            record = EpochRecord(
                epoch=epoch,
                mean_loss=mean_loss,
                tuples=tuples,
                degraded_batches=degraded,
                single_label_batches=single_label,
                wall_time_s=time.perf_counter() - start,
            )
            report.records.append(record)
            if degraded:
                logger.warning(f"Epoch {epoch}: {degraded} degraded batches trained on triplet terms only")
            logger.debug(f"Epoch {epoch}/{cfg.epochs}: loss {mean_loss:.6f} over {tuples} tuples")
            if log_file is not None:
                log_file.write(json.dumps(record.model_dump()) + "\n")
            if progress_callback:
                progress_callback(epoch, cfg.epochs)
    finally:
        if log_file is not None:
            log_file.close()

    if report.records:
        logger.info(f"Training finished: loss {report.records[0].mean_loss:.4f} -> {report.records[-1].mean_loss:.4f}")
    return model.with_parameters(params), report


def grad_check(
    model: EmbeddingModel,
    data: Sequence[Segment],
    cfg: TrainConfig,
    space: LabelSpace,
    step: float = 1e-5,
    denominator_floor: float = 1e-5,
    kink_margin: Optional[float] = None,
) -> float:
    """
    Compare the analytic batch gradient with central finite differences.

    The tuple sample is drawn once from ``cfg.seed`` and held fixed. Tuples
    whose hinge argument lies within ``kink_margin`` (default 100 * step) of
    zero are dropped, since a finite-difference step across the kink measures
    a one-sided slope.

    Returns:
        Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, floor);
        0.0 when both gradients vanish identically.
    """
    count = parameter_count(model.config)
    if count > GRAD_CHECK_MAX_PARAMETERS:
        raise ValueError(
            f"Gradient check is limited to {GRAD_CHECK_MAX_PARAMETERS} parameters, model has {count}"
        )
    if kink_margin is None:
        kink_margin = 100.0 * step

    inputs = stack_segments(model, data)
    labels = [segment.label for segment in data]
    drawn = _sampler(cfg)(labels, np.random.default_rng(cfg.seed), cfg.max_per_anchor)

    cache = forward_batch(model, inputs)
    quad_clear, trip_clear = hinge_clearance(cache.features, drawn, cfg.loss_cfg)
    sample = SamplingResult(
        quadruplets=[q for q, c in zip(drawn.quadruplets, quad_clear) if c > kink_margin],
        triplets=[t for t, c in zip(drawn.triplets, trip_clear) if c > kink_margin],
    )
    if sample.count < drawn.count:
        logger.debug(f"Gradient check dropped {drawn.count - sample.count} of {drawn.count} tuples near a hinge kink")

    def loss_at(params: np.ndarray) -> float:
        features = forward_batch(model.with_parameters(params), inputs).features
        return batch_loss(features, labels, sample, cfg.loss_cfg, space).loss_sum

    result = batch_loss(cache.features, labels, sample, cfg.loss_cfg, space)
    analytic = backward_batch(model, cache, result.gradients)

    base = model.parameters
    numeric = np.zeros_like(base)
    for k in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[k] += step
        minus[k] -= step
        numeric[k] = (loss_at(plus) - loss_at(minus)) / (2.0 * step)

    if not np.any(analytic) and not np.any(numeric):
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), denominator_floor)
    error = float(np.max(np.abs(analytic - numeric) / denom))
    logger.info(f"Gradient check over {count} parameters: max relative error {error:.3e}")
    return error
