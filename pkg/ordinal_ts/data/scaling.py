"""
Per-channel standardization of segment streams.

Statistics are fitted on training segments only and then applied unchanged to
every other segment, so held-out and missing classes never influence them.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from ..core.models import Segment

logger = logging.getLogger(__name__)


class ChannelScaler:
    """Zero-mean, unit-variance scaling per channel over all time steps."""

    def __init__(self, scaler: StandardScaler):
        self.scaler = scaler

    @classmethod
    def fit(cls, segments: Sequence[Segment]) -> "ChannelScaler":
        """
        Fit channel means and scales on the time steps of ``segments``.

        Constant channels keep a scale of 1.
        """
        if not segments:
            raise ValueError("Cannot fit a channel scaler on zero segments")
        channels = {s.n_channels for s in segments}
        if len(channels) != 1:
            raise ValueError(f"Segments disagree on channel count: {sorted(channels)}")
        scaler = StandardScaler().fit(np.vstack([s.values for s in segments]))
        logger.debug(f"Fitted channel scaler on {len(segments)} segments: mean {scaler.mean_}, scale {scaler.scale_}")
        return cls(scaler)

    @property
    def n_channels(self) -> int:
        return int(self.scaler.n_features_in_)

    def transform(self, segments: Sequence[Segment]) -> List[Segment]:
        """Scaled copies with labels and source indices kept."""
        scaled = []
        for segment in segments:
            if segment.n_channels != self.n_channels:
                raise ValueError(
                    f"Segment at source index {segment.source_index} has {segment.n_channels} channels, "
                    f"scaler was fitted on {self.n_channels}"
                )
            scaled.append(Segment(
                values=self.scaler.transform(segment.values),
                label=segment.label,
                source_index=segment.source_index,
            ))
        return scaled

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.scaler.mean_.tolist(), "scale": self.scaler.scale_.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, Sequence[float]]) -> "ChannelScaler":
        """Rebuild a fitted scaler from ``to_dict`` output."""
        mean = np.asarray(payload["mean"], dtype=np.float64)
        scale = np.asarray(payload["scale"], dtype=np.float64)
        if mean.ndim != 1 or mean.shape != scale.shape or mean.size == 0:
            raise ValueError(f"Scaler mean and scale must be matching non-empty vectors, got {mean.shape} and {scale.shape}")
        if np.any(scale <= 0):
            raise ValueError("Scaler scales must be positive")
        scaler = StandardScaler()
        scaler.mean_ = mean
        scaler.scale_ = scale
        scaler.var_ = scale ** 2
        scaler.n_features_in_ = mean.size
        scaler.n_samples_seen_ = 0
        return cls(scaler)
