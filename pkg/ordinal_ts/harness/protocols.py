"""
Seeded sampling of missing-class sets.

Nonconsecutive sets keep at least one present class between any two missing
classes; consecutive sets are runs of adjacent ordinal positions.
"""

import logging
import math
from enum import Enum
from typing import List, Sequence

import numpy as np

logger = logging.getLogger(__name__)

STUDIED_MISSING_SHARE = 0.4


class Protocol(str, Enum):
    NONCONSECUTIVE = "nonconsecutive"
    CONSECUTIVE = "consecutive"


def check_feasible(protocol: Protocol, n_classes: int, n_missing: int) -> None:
    """Raise ValueError when no missing set can satisfy the protocol."""
    if n_missing < 1:
        raise ValueError(f"n_missing must be >= 1, got {n_missing}")
    if n_classes - n_missing < 2:
        raise ValueError(
            f"{n_missing} missing classes out of {n_classes} leaves fewer than two present classes"
        )
    if Protocol(protocol) is Protocol.NONCONSECUTIVE and n_missing > math.ceil(n_classes / 2):
        raise ValueError(
            f"Nonconsecutive protocol cannot place {n_missing} missing classes among {n_classes} "
            f"(at most {math.ceil(n_classes / 2)})"
        )
    if n_missing > STUDIED_MISSING_SHARE * n_classes:
        logger.warning(
            f"{n_missing} missing classes is above {STUDIED_MISSING_SHARE:.0%} of {n_classes}; "
            f"results fall outside the studied range"
        )


def sample_missing_positions(
    protocol: Protocol,
    n_classes: int,
    n_missing: int,
    rng: np.random.Generator,
) -> List[int]:
    """
    Draw sorted 0-based domain positions of the missing classes.

    Nonconsecutive sets are uniform over all valid sets: choose a combination
    c_0 < ... < c_{k-1} of range(n - k + 1) and shift c_i by i.
    """
    check_feasible(protocol, n_classes, n_missing)
    if Protocol(protocol) is Protocol.CONSECUTIVE:
        start = int(rng.integers(0, n_classes - n_missing + 1))
        return list(range(start, start + n_missing))

    combo = np.sort(rng.choice(n_classes - n_missing + 1, size=n_missing, replace=False))
    return [int(c) + i for i, c in enumerate(combo)]


def sample_missing_set(
    protocol: Protocol,
    domain: Sequence[str],
    n_missing: int,
    rng: np.random.Generator,
) -> List[str]:
    """Missing classes in ordinal order."""
    return [domain[p] for p in sample_missing_positions(protocol, len(domain), n_missing, rng)]
