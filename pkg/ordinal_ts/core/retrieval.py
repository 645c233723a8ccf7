"""
Post-training inference: class centroids, k-nn, rank-based classification
with missing classes, the interpolation baseline and window correction.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .encoder import EmbeddingModel, embed_batch
from .labels import LabelSpace
from .models import Segment, VectorLike, squared_distances
from .stats import Decision, RankStatKind, TestConfig, missing_class_test, rank_statistic, spearman_rho

logger = logging.getLogger(__name__)


class Branch(str, Enum):
    """Which part of the classification rule produced the label."""
    KNN = "knn"
    BOTH_MISSING = "both_missing"
    TEST = "test"


@dataclass(frozen=True)
class EmbeddingStore:
    """Training features grouped by present class, with centroids and distance populations."""
    classes: Tuple[str, ...]
    members: Dict[str, np.ndarray]
    centroids: np.ndarray
    populations: Dict[str, np.ndarray]

    @property
    def embed_dim(self) -> int:
        return self.centroids.shape[1]

    def centroid(self, label: str) -> np.ndarray:
        return self.centroids[self.classes.index(label)]

    @classmethod
    def from_embeddings(cls, embeddings: np.ndarray, labels: Sequence[str], space: LabelSpace) -> "EmbeddingStore":
        """Group precomputed features by class (classes ordered like N)."""
        embeddings = np.asarray(embeddings, dtype=np.float64)
        labels = np.asarray(labels, dtype=object)
        if embeddings.shape[0] != labels.size:
            raise ValueError(f"{embeddings.shape[0]} embeddings but {labels.size} labels")
        for label in set(labels.tolist()):
            if space.is_missing(label):
                raise ValueError(f"Store cannot hold missing class {label!r}")

        members: Dict[str, np.ndarray] = {}
        populations: Dict[str, np.ndarray] = {}
        centroids = []
        for label in space.present:
            group = embeddings[labels == label]
            if group.shape[0] == 0:
                raise ValueError(f"Present class {label!r} has no training members")
            centroid = group.mean(axis=0)
            diff = group - centroid
            group.setflags(write=False)
            members[label] = group
            populations[label] = np.einsum("nd,nd->n", diff, diff)
            centroids.append(centroid)

        matrix = np.vstack(centroids)
        matrix.setflags(write=False)
        return cls(classes=space.present, members=members, centroids=matrix, populations=populations)


def build_store(model: EmbeddingModel, segments: Sequence[Segment], space: LabelSpace) -> EmbeddingStore:
    """Embed training segments and build centroids and distance populations."""
    if not segments:
        raise ValueError("Cannot build a store from zero segments")
    features = embed_batch(model, segments)
    store = EmbeddingStore.from_embeddings(features, [s.label for s in segments], space)
    logger.info(f"Built store over {len(store.classes)} classes from {len(segments)} segments")
    return store


@dataclass(frozen=True)
class LabelRankMatrix:
    """L[s][n] = D_y(s, n) for every s in S and n in N."""
    rows: Tuple[str, ...]
    cols: Tuple[str, ...]
    matrix: np.ndarray

    def row(self, label: str) -> np.ndarray:
        return self.matrix[self.rows.index(label)]


def build_label_rank_matrix(space: LabelSpace) -> LabelRankMatrix:
    """Label distances from every domain class to every present class."""
    matrix = space.distance_matrix(space.domain, space.present)
    for label in space.present:
        zeros = np.count_nonzero(matrix[space.index(label)] == 0)
        if zeros != 1:
            raise ValueError(f"Row of present class {label!r} must contain exactly one zero, found {zeros}")
    matrix.setflags(write=False)
    return LabelRankMatrix(rows=space.domain, cols=space.present, matrix=matrix)


def knn_predict(store: EmbeddingStore, f_te: VectorLike, k: int = 1) -> str:
    """
    Nearest-centroid (k=1) or k-nearest-member majority prediction.

    Ties: k=1 takes the lower ordinal; k>1 takes the class with the smaller mean
    distance among its votes, then the lower ordinal.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not store.classes:
        raise ValueError("Store is empty")
    f_te = np.asarray(f_te, dtype=np.float64)

    if k == 1:
        distances = squared_distances(f_te, store.centroids)[0]
        return store.classes[int(np.argmin(distances))]

    owners = []
    points = []
    for rank, label in enumerate(store.classes):
        owners.extend([rank] * store.members[label].shape[0])
        points.append(store.members[label])
    distances = squared_distances(f_te, np.vstack(points))[0]
    nearest = np.argsort(distances, kind="stable")[:k]

    votes: Dict[int, List[float]] = {}
    for idx in nearest:
        votes.setdefault(owners[idx], []).append(float(distances[idx]))
    best = min(votes, key=lambda rank: (-len(votes[rank]), float(np.mean(votes[rank])), rank))
    return store.classes[best]


@dataclass
class PredictionTrace:
    """Per-sample record of how a label was chosen."""
    feature_distances: Dict[str, float]
    scores: Dict[str, float]
    top2: Tuple[str, str]
    branch: Branch
    label: str
    decision: Optional[Decision] = None
    d_te: Optional[float] = None
    threshold_class: Optional[str] = None
    tied: bool = False
    degenerate: bool = False
    source_index: Optional[int] = None
    true_label: Optional[str] = None

    def to_record(self) -> Dict[str, object]:
        """JSON-friendly form."""
        return {
            "source_index": self.source_index,
            "true_label": self.true_label,
            "label": self.label,
            "branch": self.branch.value,
            "top2": list(self.top2),
            "decision": self.decision.value if self.decision else None,
            "d_te": self.d_te,
            "threshold_class": self.threshold_class,
            "tied": self.tied,
            "degenerate": self.degenerate,
            "feature_distances": self.feature_distances,
            "scores": self.scores,
        }


def rank_scores(
    F: np.ndarray,
    L: LabelRankMatrix,
    stat: RankStatKind,
) -> Tuple[Dict[str, float], bool]:
    """
    Rank statistic between F and every row of L.

    Returns (scores, degenerate). A constant F carries no ordering, so every
    score is 0 and degenerate is set; callers fall back to k-nn.
    """
    F = np.asarray(F, dtype=np.float64)
    if np.all(F == F[0]):
        return {label: 0.0 for label in L.rows}, True

    fn = rank_statistic(stat)
    return {label: fn(F, L.matrix[k]) for k, label in enumerate(L.rows)}, False


def top_two(scores: Dict[str, float], L: LabelRankMatrix, space: LabelSpace) -> Tuple[Tuple[str, str], bool]:
    """
    Two highest-scoring classes; ties go to the smaller mean label distance to N,
    then the lower ordinal. Also reports whether a score tie touched the top two.
    """
    def key(label: str):
        return (-scores[label], float(np.mean(L.row(label))), space.ordinal(label))

    ranked = sorted(scores, key=key)
    s1, s2 = ranked[0], ranked[1]
    tied = scores[s1] == scores[s2] or (len(ranked) > 2 and scores[s2] == scores[ranked[2]])
    return (s1, s2), tied


def classify(
    store: EmbeddingStore,
    L: LabelRankMatrix,
    f_te: VectorLike,
    space: LabelSpace,
    stat: RankStatKind = RankStatKind.KENDALL_TAU_B,
    test_cfg: Optional[TestConfig] = None,
    k: int = 1,
) -> PredictionTrace:
    """
    Rank-based classification that can return classes missing from training.

    Args:
        store: Training embedding store
        L: Label rank matrix of ``space``
        f_te: Test feature vector
        space: Label space
        stat: Rank statistic
        test_cfg: Missing-class test configuration
        k: Neighbours for the k-nn branch

    Returns:
        PredictionTrace with the chosen label
    """
    if len(store.classes) < 2:
        raise ValueError("Rank-based classification needs at least two present classes")
    test_cfg = test_cfg or TestConfig()
    f_te = np.asarray(f_te, dtype=np.float64)

    F = squared_distances(f_te, store.centroids)[0]
    feature_distances = {label: float(F[n]) for n, label in enumerate(store.classes)}
    scores, degenerate = rank_scores(F, L, stat)

    if degenerate:
        logger.warning("All centroid distances are equal; falling back to k-nn")
        label = knn_predict(store, f_te, k)
        return PredictionTrace(
            feature_distances=feature_distances,
            scores=scores,
            top2=(label, label),
            branch=Branch.KNN,
            label=label,
            degenerate=True,
        )

    (s1, s2), tied = top_two(scores, L, space)
    missing1, missing2 = space.is_missing(s1), space.is_missing(s2)
    trace = PredictionTrace(
        feature_distances=feature_distances,
        scores=scores,
        top2=(s1, s2),
        branch=Branch.KNN,
        label=s1,
        tied=tied,
    )

    if not missing1 and not missing2:
        trace.label = knn_predict(store, f_te, k)
    elif missing1 and missing2:
        trace.branch = Branch.BOTH_MISSING
        trace.label = s1
    else:
        y_n, y_m = (s2, s1) if missing1 else (s1, s2)
        trace.branch = Branch.TEST
        trace.threshold_class = y_n
        trace.d_te = feature_distances[y_n]
        trace.decision = missing_class_test(trace.d_te, store.populations[y_n], test_cfg)
        trace.label = y_m if trace.decision is Decision.REJECT_TO_MISSING else y_n
    return trace


@dataclass(frozen=True)
class AugmentedCentroids:
    """Centroids for every class in S, missing ones interpolated."""
    classes: Tuple[str, ...]
    centroids: np.ndarray

    def centroid(self, label: str) -> np.ndarray:
        return self.centroids[self.classes.index(label)]


def interpolate_missing(store: EmbeddingStore, space: LabelSpace) -> AugmentedCentroids:
    """
    Give each missing class a centroid built from its present neighbours.

    Between neighbours b < m < a the centroid is
    (D_y(m,a) * c_b + D_y(m,b) * c_a) / (D_y(m,b) + D_y(m,a)). A boundary class is
    extrapolated along the line through the two nearest present classes on the
    existing side: c_p1 + (c_p1 - c_p2) * D_y(m,p1) / D_y(p1,p2).
    """
    present = list(space.present)
    if len(present) < 2:
        raise ValueError("Interpolation needs at least two present classes")

    rows = []
    for label in space.domain:
        if not space.is_missing(label):
            rows.append(store.centroid(label))
            continue
        o = space.ordinal(label)
        below = [c for c in present if space.ordinal(c) < o]
        above = [c for c in present if space.ordinal(c) > o]
        if below and above:
            b, a = below[-1], above[0]
            d_mb, d_ma = space.distance(label, b), space.distance(label, a)
            rows.append((d_ma * store.centroid(b) + d_mb * store.centroid(a)) / (d_mb + d_ma))
        else:
            p1, p2 = (below[-1], below[-2]) if below else (above[0], above[1])
            scale = space.distance(label, p1) / space.distance(p1, p2)
            c1 = store.centroid(p1)
            rows.append(c1 + (c1 - store.centroid(p2)) * scale)

    matrix = np.vstack(rows)
    matrix.setflags(write=False)
    return AugmentedCentroids(classes=space.domain, centroids=matrix)


def baseline_predict(augmented: AugmentedCentroids, f_te: VectorLike) -> str:
    """Nearest augmented centroid; ties go to the lower ordinal."""
    distances = squared_distances(np.asarray(f_te, dtype=np.float64), augmented.centroids)[0]
    return augmented.classes[int(np.argmin(distances))]


def window_correct(
    predictions: Sequence[str],
    w: int,
    space: LabelSpace,
    previous: Optional[str] = None,
) -> List[str]:
    """
    Majority-rule correction over consecutive non-overlapping windows of size w.

    Modal ties go to the label of the preceding corrected window when it is
    among the tied classes, otherwise to the lowest ordinal. ``previous`` seeds
    the label before the first window. w = 0 returns the input unchanged.
    """
    if w < 0:
        raise ValueError(f"Window size must be >= 0, got {w}")
    predictions = list(predictions)
    if w == 0:
        return predictions

    corrected: List[str] = []
    for start in range(0, len(predictions), w):
        window = predictions[start:start + w]
        counts = Counter(window)
        top = max(counts.values())
        tied = [label for label, count in counts.items() if count == top]
        if len(tied) == 1:
            winner = tied[0]
        elif previous in tied:
            winner = previous
        else:
            winner = min(tied, key=space.ordinal)
        corrected.extend([winner] * len(window))
        previous = winner
    return corrected


def pairwise_centroid_distances(store: EmbeddingStore) -> np.ndarray:
    """Symmetric |N| x |N| matrix of squared centroid distances."""
    matrix = squared_distances(store.centroids, store.centroids)
    matrix = (matrix + matrix.T) / 2.0
    np.fill_diagonal(matrix, 0.0)
    return matrix


def order_preservation(store: EmbeddingStore, space: LabelSpace) -> float:
    """Spearman correlation between centroid distances and label distances over class pairs."""
    feature = pairwise_centroid_distances(store)
    label = space.distance_matrix(store.classes, store.classes)
    upper = np.triu_indices(len(store.classes), k=1)
    if upper[0].size < 2:
        return 0.0
    return spearman_rho(feature[upper], label[upper])


def class_distance_matrix(embeddings: np.ndarray, labels: Sequence[str], space: LabelSpace) -> np.ndarray:
    """
    Mean squared feature distance between the samples of every pair of classes.

    Rows and columns follow the domain order; classes without samples get NaN.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=object)
    groups = [embeddings[labels == label] for label in space.domain]
    n = len(space.domain)
    matrix = np.full((n, n), np.nan)
    for r in range(n):
        for c in range(r, n):
            if groups[r].shape[0] == 0 or groups[c].shape[0] == 0:
                continue
            value = float(squared_distances(groups[r], groups[c]).mean())
            matrix[r, c] = matrix[c, r] = value
    return matrix
