"""
Ordinal-quadruplet loss, its triplet and log-ratio terms, and tuple sampling.

All distances are squared Euclidean distances D(f_a, f_b) = ||f_a - f_b||^2,
used consistently by both loss terms.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .labels import LabelSpace

logger = logging.getLogger(__name__)

# Candidate sets up to this size are enumerated; larger ones are rejection-sampled.
ENUMERATION_LIMIT = 20_000


class LossConfig(BaseModel):
    """Hinge margin and the distance floor used before logs."""
    margin: float = Field(default=0.2, ge=0, description="Triplet margin delta")
    epsilon_d: float = Field(default=1e-8, gt=0, description="Distance floor for the log-ratio term")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_settings(cls, settings, **overrides) -> "LossConfig":
        values = {"margin": settings.margin, "epsilon_d": settings.epsilon_d}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class Quadruplet:
    """Anchor, same-label partner and two negatives with distinct labels."""
    a: int
    s: int
    i: int
    j: int


@dataclass(frozen=True)
class Triplet:
    """Anchor, positive, negative."""
    a: int
    p: int
    n: int


@dataclass
class SamplingResult:
    """Tuples drawn from one batch."""
    quadruplets: List[Quadruplet] = field(default_factory=list)
    triplets: List[Triplet] = field(default_factory=list)
    degraded: bool = False
    warnings: int = 0

    @property
    def count(self) -> int:
        return len(self.quadruplets) + len(self.triplets)


@dataclass
class BatchLoss:
    """Summed loss over a sampled batch and its feature gradients."""
    loss_sum: float
    count: int
    gradients: np.ndarray

    @property
    def mean(self) -> float:
        return self.loss_sum / self.count if self.count else 0.0


def validate_quadruplet(q: Quadruplet, labels: Sequence[str]) -> None:
    """Raise ValueError unless ``q`` satisfies the quadruplet label constraints."""
    idx = (q.a, q.s, q.i, q.j)
    if len(set(idx)) != 4:
        raise ValueError(f"Quadruplet indices must be distinct, got {idx}")
    ya, ys, yi, yj = (labels[k] for k in idx)
    if ya != ys:
        raise ValueError(f"Anchor and partner labels differ: {ya!r} vs {ys!r}")
    if yi == ya or yj == ya:
        raise ValueError(f"Negatives must differ from the anchor label {ya!r}")
    if yi == yj:
        raise ValueError(f"Negatives must have distinct labels, both are {yi!r}")


def triplet_loss(D_ap: float, D_an: float, delta: float) -> float:
    """Hinge [D_ap - D_an + delta]_+."""
    return max(D_ap - D_an + delta, 0.0)


def log_ratio_loss(
    D_ai: float,
    D_aj: float,
    Dy_ai: float,
    Dy_aj: float,
    epsilon_d: float = 1e-8,
) -> float:
    """
    Squared difference between the feature and label log-ratios.

    Feature distances are clamped below by ``epsilon_d``.
    """
    if Dy_ai <= 0 or Dy_aj <= 0:
        raise ValueError(f"Label distances must be positive, got {Dy_ai} and {Dy_aj}")
    r = (math.log(max(D_ai, epsilon_d)) - math.log(max(D_aj, epsilon_d))) - (math.log(Dy_ai) - math.log(Dy_aj))
    return r * r


def _pair_terms(embeddings: np.ndarray, left: np.ndarray, right: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    diff = embeddings[left] - embeddings[right]
    return np.einsum("nd,nd->n", diff, diff), diff


def _quadruplet_terms(
    embeddings: np.ndarray,
    idx: np.ndarray,
    dy_ai: np.ndarray,
    dy_aj: np.ndarray,
    cfg: LossConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-quadruplet losses (n,) and gradients (n x 4 x E) ordered a, s, i, j."""
    if np.any(dy_ai <= 0) or np.any(dy_aj <= 0):
        raise ValueError("Label distances inside a quadruplet must be positive (sampling bug)")
    A, S, I, J = idx.T
    d_as, diff_as = _pair_terms(embeddings, A, S)
    d_ai, diff_ai = _pair_terms(embeddings, A, I)
    d_aj, diff_aj = _pair_terms(embeddings, A, J)

    hinge_i = d_as - d_ai + cfg.margin
    hinge_j = d_as - d_aj + cfg.margin
    active_i = (hinge_i > 0).astype(np.float64)
    active_j = (hinge_j > 0).astype(np.float64)

    eps = cfg.epsilon_d
    c_ai = np.maximum(d_ai, eps)
    c_aj = np.maximum(d_aj, eps)
    r = (np.log(c_ai) - np.log(c_aj)) - (np.log(dy_ai) - np.log(dy_aj))
    losses = active_i * hinge_i + active_j * hinge_j + r * r

    dlr_ai = np.where(d_ai > eps, 2.0 * r / c_ai, 0.0)
    dlr_aj = np.where(d_aj > eps, -2.0 * r / c_aj, 0.0)

    coef_as = active_i + active_j
    coef_ai = dlr_ai - active_i
    coef_aj = dlr_aj - active_j

    grads = np.empty((idx.shape[0], 4, embeddings.shape[1]))
    grads[:, 1] = -2.0 * coef_as[:, None] * diff_as
    grads[:, 2] = -2.0 * coef_ai[:, None] * diff_ai
    grads[:, 3] = -2.0 * coef_aj[:, None] * diff_aj
    grads[:, 0] = -(grads[:, 1] + grads[:, 2] + grads[:, 3])
    return losses, grads


def _triplet_terms(embeddings: np.ndarray, idx: np.ndarray, cfg: LossConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-triplet hinge losses (n,) and gradients (n x 3 x E) ordered a, p, n."""
    A, P, N = idx.T
    d_ap, diff_ap = _pair_terms(embeddings, A, P)
    d_an, diff_an = _pair_terms(embeddings, A, N)
    hinge = d_ap - d_an + cfg.margin
    active = (hinge > 0).astype(np.float64)

    grads = np.empty((idx.shape[0], 3, embeddings.shape[1]))
    grads[:, 1] = -2.0 * active[:, None] * diff_ap
    grads[:, 2] = 2.0 * active[:, None] * diff_an
    grads[:, 0] = -(grads[:, 1] + grads[:, 2])
    return active * hinge, grads


def quadruplet_loss(
    embeddings: np.ndarray,
    labels: Sequence[str],
    q: Quadruplet,
    cfg: LossConfig,
    space: LabelSpace,
) -> Tuple[float, np.ndarray]:
    """
    Ordinal-quadruplet loss l_t(a,s,i) + l_t(a,s,j) + l_lr(a,i,j) for one tuple.

    Args:
        embeddings: Batch features (batch x E)
        labels: Batch labels
        q: Quadruplet of batch indices
        cfg: Loss configuration
        space: Label space supplying D_y

    Returns:
        (loss, gradients) where gradients is a 4 x E array for f_a, f_s, f_i, f_j
    """
    validate_quadruplet(q, labels)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    idx = np.array([[q.a, q.s, q.i, q.j]])
    dy_ai = np.array([space.distance(labels[q.a], labels[q.i])])
    dy_aj = np.array([space.distance(labels[q.a], labels[q.j])])
    losses, grads = _quadruplet_terms(embeddings, idx, dy_ai, dy_aj, cfg)
    return float(losses[0]), grads[0]


def batch_loss(
    embeddings: np.ndarray,
    labels: Sequence[str],
    sample: SamplingResult,
    cfg: LossConfig,
    space: Optional[LabelSpace] = None,
) -> BatchLoss:
    """
    Sum of tuple losses over a sampled batch with gradients for every batch row.

    Contributions are accumulated in tuple order so the result is reproducible.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    gradients = np.zeros_like(embeddings)
    total = 0.0

    if sample.quadruplets:
        if space is None:
            raise ValueError("Quadruplet loss needs a label space for D_y")
        idx = np.array([[q.a, q.s, q.i, q.j] for q in sample.quadruplets])
        positions = np.array([space.index(label) for label in labels])
        dmat = space.distance_matrix()
        dy_ai = dmat[positions[idx[:, 0]], positions[idx[:, 2]]]
        dy_aj = dmat[positions[idx[:, 0]], positions[idx[:, 3]]]
        losses, grads = _quadruplet_terms(embeddings, idx, dy_ai, dy_aj, cfg)
        total += float(losses.sum())
        for slot in range(4):
            np.add.at(gradients, idx[:, slot], grads[:, slot])

    if sample.triplets:
        idx = np.array([[t.a, t.p, t.n] for t in sample.triplets])
        losses, grads = _triplet_terms(embeddings, idx, cfg)
        total += float(losses.sum())
        for slot in range(3):
            np.add.at(gradients, idx[:, slot], grads[:, slot])

    return BatchLoss(loss_sum=total, count=sample.count, gradients=gradients)


def hinge_clearance(embeddings: np.ndarray, sample: SamplingResult, cfg: LossConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distance of every hinge argument from its kink at zero.

    Returns:
        (per-quadruplet min over both hinges, per-triplet) absolute hinge arguments
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    quad = np.empty(0)
    trip = np.empty(0)
    if sample.quadruplets:
        A, S, I, J = np.array([[q.a, q.s, q.i, q.j] for q in sample.quadruplets]).T
        d_as = _pair_terms(embeddings, A, S)[0]
        hinge_i = d_as - _pair_terms(embeddings, A, I)[0] + cfg.margin
        hinge_j = d_as - _pair_terms(embeddings, A, J)[0] + cfg.margin
        quad = np.minimum(np.abs(hinge_i), np.abs(hinge_j))
    if sample.triplets:
        A, P, N = np.array([[t.a, t.p, t.n] for t in sample.triplets]).T
        trip = np.abs(_pair_terms(embeddings, A, P)[0] - _pair_terms(embeddings, A, N)[0] + cfg.margin)
    return quad, trip


def _draw(rng: np.random.Generator, total: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(total, size=k, replace=False))


def _valid_pairs(negatives: np.ndarray, labels: np.ndarray) -> List[Tuple[int, int]]:
    return [
        (int(negatives[u]), int(negatives[v]))
        for u in range(len(negatives))
        for v in range(u + 1, len(negatives))
        if labels[negatives[u]] != labels[negatives[v]]
    ]


def _count_valid_pairs(neg_labels: np.ndarray) -> int:
    n = len(neg_labels)
    _, counts = np.unique(neg_labels, return_counts=True)
    return n * (n - 1) // 2 - int(sum(c * (c - 1) // 2 for c in counts))


def _quadruplets_for_anchor(
    a: int,
    positives: np.ndarray,
    negatives: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    max_per_anchor: int,
) -> List[Quadruplet]:
    n_pairs = _count_valid_pairs(labels[negatives])
    total = len(positives) * n_pairs
    k = min(max_per_anchor, total)
    if total <= ENUMERATION_LIMIT:
        pairs = _valid_pairs(negatives, labels)
        chosen = _draw(rng, total, k)
        return [
            Quadruplet(a, int(positives[c // n_pairs]), *pairs[c % n_pairs])
            for c in chosen
        ]

    # Uniform over (partner, unordered valid pair) by rejection.
    picked = set()
    while len(picked) < k:
        s = int(positives[rng.integers(len(positives))])
        i, j = (int(v) for v in rng.choice(negatives, size=2, replace=False))
        if labels[i] == labels[j]:
            continue
        picked.add((s, min(i, j), max(i, j)))
    return [Quadruplet(a, s, i, j) for s, i, j in sorted(picked)]


def _triplets_for_anchor(
    a: int,
    positives: np.ndarray,
    negatives: np.ndarray,
    rng: np.random.Generator,
    max_per_anchor: int,
) -> List[Triplet]:
    total = len(positives) * len(negatives)
    k = min(max_per_anchor, total)
    chosen = _draw(rng, total, k)
    return [
        Triplet(a, int(positives[c // len(negatives)]), int(negatives[c % len(negatives)]))
        for c in chosen
    ]


def _partners(labels: np.ndarray, a: int) -> Tuple[np.ndarray, np.ndarray]:
    same = labels == labels[a]
    same[a] = False
    others = labels != labels[a]
    return np.flatnonzero(same), np.flatnonzero(others)


def sample_quadruplets(
    labels: Sequence[str],
    rng: np.random.Generator,
    max_per_anchor: int = 4,
) -> SamplingResult:
    """
    Draw quadruplets per anchor uniformly without replacement.

    Anchors whose batch offers a partner but only one other label contribute
    degraded triplets instead; a single-label batch yields nothing.

    Args:
        labels: Batch labels
        rng: Random generator (consumed in anchor order)
        max_per_anchor: Upper bound on tuples per anchor

    Returns:
        SamplingResult with quadruplets and any degraded triplets
    """
    if len(labels) == 0:
        raise ValueError("Cannot sample quadruplets from an empty batch")
    if max_per_anchor < 1:
        raise ValueError(f"max_per_anchor must be >= 1, got {max_per_anchor}")

    labels = np.asarray(labels, dtype=object)
    result = SamplingResult()
    if len(set(labels.tolist())) < 2:
        result.warnings += 1
        logger.warning(f"Batch of {len(labels)} segments has a single label; no tuples sampled")
        return result

    for a in range(len(labels)):
        positives, negatives = _partners(labels, a)
        if len(positives) == 0:
            continue
        other_labels = set(labels[negatives].tolist())
        if len(other_labels) >= 2:
            result.quadruplets.extend(
                _quadruplets_for_anchor(a, positives, negatives, labels, rng, max_per_anchor)
            )
        else:
            result.degraded = True
            result.triplets.extend(_triplets_for_anchor(a, positives, negatives, rng, max_per_anchor))

    if result.degraded:
        logger.debug(f"Degraded batch: {len(result.triplets)} triplets, {len(result.quadruplets)} quadruplets")
    return result


def sample_triplets(
    labels: Sequence[str],
    rng: np.random.Generator,
    max_per_anchor: int = 4,
) -> SamplingResult:
    """Draw (anchor, positive, negative) triplets for the triplet-only loss."""
    if len(labels) == 0:
        raise ValueError("Cannot sample triplets from an empty batch")
    if max_per_anchor < 1:
        raise ValueError(f"max_per_anchor must be >= 1, got {max_per_anchor}")

    labels = np.asarray(labels, dtype=object)
    result = SamplingResult()
    if len(set(labels.tolist())) < 2:
        result.warnings += 1
        logger.warning(f"Batch of {len(labels)} segments has a single label; no tuples sampled")
        return result

    for a in range(len(labels)):
        positives, negatives = _partners(labels, a)
        if len(positives) == 0:
            continue
        result.triplets.extend(_triplets_for_anchor(a, positives, negatives, rng, max_per_anchor))
    return result
