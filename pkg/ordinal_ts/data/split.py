"""Stratified train/test split that keeps missing classes out of training."""

import logging
import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ..core.models import Segment

logger = logging.getLogger(__name__)


def split_holdout(
    segments: Sequence[Segment],
    test_fraction: float,
    missing: Iterable[str],
    seed: int,
) -> Tuple[List[Segment], List[Segment]]:
    """
    Split labeled segments per class, sending every missing-class segment to test.

    For each remaining class ceil(test_fraction * count) segments, chosen by a
    seeded permutation, go to test. Both sides keep stream (source_index) order.

    Args:
        segments: Labeled segments
        test_fraction: Share of each present class held out, in (0, 1)
        missing: Classes withheld from training
        seed: Permutation seed

    Returns:
        (train, test)
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    missing = set(missing)
    rng = np.random.default_rng(seed)

    by_class = {}
    for position, segment in enumerate(segments):
        if segment.label is None:
            raise ValueError(f"Segment at source index {segment.source_index} has no label")
        by_class.setdefault(segment.label, []).append(position)

    train_idx: List[int] = []
    test_idx: List[int] = []
    for label in sorted(by_class):
        positions = by_class[label]
        if label in missing:
            test_idx.extend(positions)
            continue
        n_test = int(math.ceil(test_fraction * len(positions)))
        if n_test >= len(positions):
            raise ValueError(
                f"Class {label!r} has {len(positions)} segments; holding out {n_test} leaves none for training"
            )
        shuffled = rng.permutation(positions)
        test_idx.extend(int(p) for p in shuffled[:n_test])
        train_idx.extend(int(p) for p in shuffled[n_test:])

    def ordered(indices: List[int]) -> List[Segment]:
        return sorted((segments[k] for k in indices), key=lambda s: s.source_index)

    train, test = ordered(train_idx), ordered(test_idx)
    logger.debug(f"Split {len(segments)} segments into {len(train)} train / {len(test)} test (missing {sorted(missing)})")
    return train, test
