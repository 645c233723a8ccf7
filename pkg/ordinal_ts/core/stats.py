"""
Tie-aware rank correlations, nearest-rank quantiles and the missing-class test.
"""

import logging
import math
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import kendalltau, spearmanr

logger = logging.getLogger(__name__)


class RankStatKind(str, Enum):
    """Rank statistics usable for retrieval."""
    KENDALL_TAU_B = "kendall_tau_b"
    SPEARMAN_RHO = "spearman_rho"


class Decision(str, Enum):
    """Outcome of the missing-class test."""
    RETAIN_NON_MISSING = "retain_non_missing"
    REJECT_TO_MISSING = "reject_to_missing"


class TestConfig(BaseModel):
    """Significance level of the missing-class test."""
    __test__ = False

    alpha: float = Field(default=0.05, gt=0, lt=1, description="Type-I error level")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_settings(cls, settings, **overrides) -> "TestConfig":
        values = {"alpha": settings.alpha}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _paired(x: Sequence[float], y: Sequence[float]):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("Rank statistics expect 1-D inputs")
    if x.size != y.size:
        raise ValueError(f"Length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError(f"Rank statistics need at least 2 observations, got {x.size}")
    return x, y


def _degenerate(x: np.ndarray, y: np.ndarray) -> bool:
    return bool(np.all(x == x[0]) or np.all(y == y[0]))


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Kendall's tau-b over all pairs.

    (P - Q) / sqrt((P + Q + T_x) * (P + Q + T_y)), where T_x counts pairs tied
    only in x and T_y pairs tied only in y. Returns 0 when either factor is 0,
    which happens exactly when x or y is constant.
    """
    x, y = _paired(x, y)
    if _degenerate(x, y):
        return 0.0
    tau = float(kendalltau(x, y, variant="b").statistic)
    return max(-1.0, min(1.0, tau))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks; 0 when either rank vector is constant."""
    x, y = _paired(x, y)
    if _degenerate(x, y):
        return 0.0
    rho = float(spearmanr(x, y).statistic)
    return max(-1.0, min(1.0, rho))


_RANK_STATS = {
    RankStatKind.KENDALL_TAU_B: kendall_tau_b,
    RankStatKind.SPEARMAN_RHO: spearman_rho,
}


def rank_statistic(kind: RankStatKind) -> Callable[[Sequence[float], Sequence[float]], float]:
    """Function implementing ``kind``."""
    return _RANK_STATS[RankStatKind(kind)]


def rank_correlation(kind: RankStatKind, x: Sequence[float], y: Sequence[float]) -> float:
    return rank_statistic(kind)(x, y)


def quantile(d: Sequence[float], p: float) -> float:
    """
    Nearest-rank sample quantile: the ceil(p * n)-th smallest element (1-based).

    A 1e-9 slack absorbs float noise in p * n (0.9 * 10 must give rank 9).
    """
    values = np.sort(np.asarray(d, dtype=np.float64).ravel())
    if values.size == 0:
        raise ValueError("Quantile of an empty set is undefined")
    if not 0 < p <= 1:
        raise ValueError(f"Quantile level must be in (0, 1], got {p}")
    rank = int(math.ceil(p * values.size - 1e-9))
    rank = min(max(rank, 1), values.size)
    return float(values[rank - 1])


def missing_class_test(d_te: float, d_population: Sequence[float], cfg: TestConfig) -> Decision:
    """
    Reject "sample belongs to the present class" when d_te > Q(1 - alpha, population).

    Args:
        d_te: Distance from the test feature to the present class centroid
        d_population: Training distances of that class to its own centroid
        cfg: Test configuration

    Returns:
        REJECT_TO_MISSING iff d_te strictly exceeds the threshold
    """
    population = np.asarray(d_population, dtype=np.float64)
    if population.size == 0:
        raise ValueError("Missing-class test needs a non-empty distance population")
    threshold = quantile(population, 1.0 - cfg.alpha)
    if d_te > threshold:
        return Decision.REJECT_TO_MISSING
    return Decision.RETAIN_NON_MISSING
