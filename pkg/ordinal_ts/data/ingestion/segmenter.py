"""
Cut label-constant runs of a time-step table into fixed-length windows.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ...core.models import Segment

logger = logging.getLogger(__name__)


@dataclass
class SegmentingConfig:
    """Window geometry."""
    window_length: int = 10
    stride: int = 10

    def __post_init__(self):
        """Validate configuration."""
        if self.window_length < 1:
            raise ValueError(f"Window length must be >= 1, got {self.window_length}")
        if self.stride < 1:
            raise ValueError(f"Stride must be >= 1, got {self.stride}")


@dataclass
class LabelRun:
    """Consecutive rows sharing one label."""
    label: str
    start_row: int
    end_row: int

    @property
    def length(self) -> int:
        return self.end_row - self.start_row


def find_runs(labels: Sequence[str]) -> List[LabelRun]:
    """Partition a label column into maximal label-constant runs."""
    runs: List[LabelRun] = []
    start = 0
    for row in range(1, len(labels) + 1):
        if row == len(labels) or labels[row] != labels[start]:
            runs.append(LabelRun(label=str(labels[start]), start_row=start, end_row=row))
            start = row
    return runs


class RunSegmenter:
    """Windows each run independently so no window spans a label change."""

    def __init__(self, config: SegmentingConfig):
        self.config = config

    def window_starts(self, run: LabelRun) -> range:
        """Row offsets (absolute) of every full window inside ``run``."""
        last = run.end_row - self.config.window_length
        return range(run.start_row, last + 1, self.config.stride)

    def segment(self, values: np.ndarray, labels: Sequence[str]) -> List[Segment]:
        """
        Window a (rows x channels) table.

        Args:
            values: Numeric table, one row per time step
            labels: Label of every row

        Returns:
            Segments in row order; source_index is the starting row
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Expected a 2-D table, got shape {values.shape}")
        if values.shape[0] != len(labels):
            raise ValueError(f"{values.shape[0]} rows but {len(labels)} labels")

        segments: List[Segment] = []
        width = self.config.window_length
        for run in find_runs(labels):
            starts = self.window_starts(run)
            if not starts:
                logger.debug(f"Run of {run.label!r} at row {run.start_row} is shorter than the window; skipped")
            for start in starts:
                segments.append(
                    Segment(values=values[start:start + width], label=run.label, source_index=start)
                )
        return segments


def create_segmenter(config: SegmentingConfig) -> RunSegmenter:
    """Create a run segmenter."""
    return RunSegmenter(config)
