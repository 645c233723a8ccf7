"""Ordinal time-series classification with missing classes.

Encoders trained with an ordinal-quadruplet objective, rank-based retrieval
that can return classes absent from training, and an experiment harness.
"""

__version__ = "1.0.0"
__author__ = "Ordinal TS Team"

# Core exports
from .config.settings import Settings, load_settings
from .core.labels import LabelSpace
from .core.models import FeatureVector, Segment
from .core.encoder import EncoderConfig, init_model, forward, embed_batch
from .core.trainer import TrainConfig, train
from .core.retrieval import build_store, build_label_rank_matrix, classify

__all__ = [
    "Settings",
    "load_settings",
    "LabelSpace",
    "Segment",
    "FeatureVector",
    "EncoderConfig",
    "init_model",
    "forward",
    "embed_batch",
    "TrainConfig",
    "train",
    "build_store",
    "build_label_rank_matrix",
    "classify",
]
