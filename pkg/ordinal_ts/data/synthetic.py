"""
Synthetic ordinal time series.

Class c with ordinal position o_c emits segments from a stationary AR(1)
process per channel around the mean mu_c = o_c * separation * u, where u is a
unit direction drawn once from the seed. Class means are therefore spaced
proportionally to ordinal distance.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.labels import LabelSpace
from ..core.models import Segment
from .utils.models import SyntheticConfig

logger = logging.getLogger(__name__)


def synthetic_space(cfg: SyntheticConfig, missing: Sequence[str] = ()) -> LabelSpace:
    """Label space c1..cN with ordinals 1..N."""
    return LabelSpace.from_names(cfg.class_names, missing=missing)


def _direction(rng: np.random.Generator, n_channels: int) -> np.ndarray:
    u = rng.standard_normal(n_channels)
    norm = np.linalg.norm(u)
    while norm == 0.0:
        u = rng.standard_normal(n_channels)
        norm = np.linalg.norm(u)
    return u / norm


def _means(u: np.ndarray, cfg: SyntheticConfig) -> np.ndarray:
    ordinals = np.arange(1, cfg.n_classes + 1, dtype=np.float64)
    return ordinals[:, None] * cfg.class_separation * u[None, :]


def class_means(cfg: SyntheticConfig) -> np.ndarray:
    """n_classes x n_channels matrix of class means (row k is ordinal k + 1)."""
    return _means(_direction(np.random.default_rng(cfg.seed), cfg.n_channels), cfg)


def _ar1(rng: np.random.Generator, mean: np.ndarray, cfg: SyntheticConfig) -> np.ndarray:
    phi = cfg.ar_coefficient
    length, channels = cfg.segment_length, cfg.n_channels
    values = np.empty((length, channels))
    # start from the stationary distribution
    values[0] = mean + rng.standard_normal(channels) * cfg.noise_std / np.sqrt(1.0 - phi * phi)
    for t in range(1, length):
        values[t] = mean + phi * (values[t - 1] - mean) + rng.standard_normal(channels) * cfg.noise_std
    return values


def generate(cfg: SyntheticConfig) -> List[Segment]:
    """
    Generate a labeled segment stream.

    Each class contributes ``segments_per_class`` segments grouped into
    label-constant runs of ``run_length``; runs are shuffled with the seed and
    ``source_index`` is the position in the resulting stream.

    Args:
        cfg: Generator configuration

    Returns:
        Segments in stream order
    """
    rng = np.random.default_rng(cfg.seed)
    means = _means(_direction(rng, cfg.n_channels), cfg)

    runs = []
    for k, name in enumerate(cfg.class_names):
        for start in range(0, cfg.segments_per_class, cfg.run_length):
            size = min(cfg.run_length, cfg.segments_per_class - start)
            runs.append((k, name, size))
    order = rng.permutation(len(runs))

    segments: List[Segment] = []
    for r in order:
        k, name, size = runs[r]
        for _ in range(size):
            values = _ar1(rng, means[k], cfg)
            segments.append(Segment(values=values, label=name, source_index=len(segments)))

    logger.info(
        f"Generated {len(segments)} segments over {cfg.n_classes} classes "
        f"({len(runs)} runs, seed {cfg.seed})"
    )
    return segments


def export_csv(
    segments: Sequence[Segment],
    path: Union[str, Path],
    channel_names: Optional[Sequence[str]] = None,
    label_column: str = "label",
) -> Path:
    """
    Write segments in the ingestion CSV schema: one row per time step.

    Args:
        segments: Labeled segments in stream order
        path: Output file
        channel_names: Feature column names, default ch0..ch{c-1}
        label_column: Name of the label column

    Returns:
        Path written
    """
    if not segments:
        raise ValueError("Nothing to export")
    n_channels = segments[0].n_channels
    if channel_names is None:
        channel_names = [f"ch{k}" for k in range(n_channels)]
    if len(channel_names) != n_channels:
        raise ValueError(f"Got {len(channel_names)} channel names for {n_channels} channels")
    if label_column in channel_names:
        raise ValueError(f"Label column {label_column!r} collides with a channel name")

    values = np.vstack([s.values for s in segments])
    labels = np.repeat([s.label for s in segments], [s.window_length for s in segments])
    frame = pd.DataFrame(values, columns=list(channel_names))
    frame[label_column] = labels

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Exported {len(segments)} segments ({len(frame)} rows) to {path}")
    return path
