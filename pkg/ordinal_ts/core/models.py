"""
Runtime data types shared across the pipeline.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

UNIT_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Segment:
    """One fixed-length window of a multivariate time series."""
    values: np.ndarray
    label: Optional[str] = None
    source_index: int = 0

    def __post_init__(self):
        """Freeze a float copy of the values and validate its shape."""
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Segment values must be 2-D (window_length x n_channels), got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"Segment must have at least one time step and one channel, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"Segment at source index {self.source_index} contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.label is not None:
            object.__setattr__(self, "label", str(self.label))

    @property
    def window_length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    """L2-normalized encoder output f(x)."""
    components: np.ndarray

    def __post_init__(self):
        components = np.array(self.components, dtype=np.float64)
        if components.ndim != 1 or components.size == 0:
            raise ValueError(f"Feature vector must be a non-empty 1-D array, got shape {components.shape}")
        norm = float(np.linalg.norm(components))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise ValueError(f"Feature vector must have unit norm, got {norm:.9f}")
        components.setflags(write=False)
        object.__setattr__(self, "components", components)

    @property
    def dim(self) -> int:
        return self.components.size

    def __array__(self, dtype=None, copy=None):
        return self.components if dtype is None else self.components.astype(dtype)


VectorLike = Union[FeatureVector, np.ndarray]


def feature_distance(a: VectorLike, b: VectorLike) -> float:
    """
    Squared Euclidean distance D(a, b) = ||a - b||^2.

    Accepts feature vectors or raw arrays (centroids are not unit-norm).
    """
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"Feature dimension mismatch: {va.shape} vs {vb.shape}")
    diff = va - vb
    return float(diff @ diff)


def squared_distances(points: np.ndarray, references: np.ndarray) -> np.ndarray:
    """Row-wise squared distances between each point and each reference (n x m)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    references = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if points.shape[1] != references.shape[1]:
        raise ValueError(f"Feature dimension mismatch: {points.shape[1]} vs {references.shape[1]}")
    diff = points[:, None, :] - references[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)
