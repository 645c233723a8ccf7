"""
Desk-scale temporal encoders with exact analytic gradients.

Canonical parameter order (flat float64 vector):

    mean_pool_mlp:  W1 (hidden x channels), b1 (hidden), W2 (embed x hidden), b2 (embed)
    bi_recurrent:   Wx_fwd (hidden x channels), Wh_fwd (hidden x hidden), b_fwd (hidden),
                    Wx_bwd (hidden x channels), Wh_bwd (hidden x hidden), b_bwd (hidden),
                    Wo (embed x 2*hidden), bo (embed)

Matrices are stored row-major. The persistence format relies on this order.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .models import FeatureVector, Segment

logger = logging.getLogger(__name__)


class DegenerateEmbeddingError(ValueError):
    """Raised when the pre-normalization output vector is zero."""


class EncoderKind(str, Enum):
    """Encoder architectures."""
    BI_RECURRENT = "bi_recurrent"
    MEAN_POOL_MLP = "mean_pool_mlp"


class EncoderConfig(BaseModel):
    """Encoder shape and initialization seed."""
    kind: EncoderKind = Field(default=EncoderKind.BI_RECURRENT, description="Encoder architecture")
    n_channels: int = Field(..., ge=1, description="Input channels")
    hidden_dim: int = Field(default=256, ge=1, description="Hidden dimension")
    embed_dim: int = Field(default=256, ge=1, description="Output feature dimension")
    window_length: int = Field(default=10, ge=1, description="Time steps per segment")
    seed: int = Field(default=0, ge=0, description="Initialization seed")

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_settings(cls, settings, **overrides) -> "EncoderConfig":
        """Fill unspecified fields from settings."""
        values = {
            "kind": settings.encoder_kind,
            "hidden_dim": settings.hidden_dim,
            "embed_dim": settings.embed_dim,
            "window_length": settings.window_length,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def parameter_layout(config: EncoderConfig) -> List[Tuple[str, Tuple[int, ...], int]]:
    """Blocks of the flat parameter vector as (name, shape, fan_in)."""
    c, h, e = config.n_channels, config.hidden_dim, config.embed_dim
    if config.kind is EncoderKind.MEAN_POOL_MLP:
        return [
            ("W1", (h, c), c),
            ("b1", (h,), c),
            ("W2", (e, h), h),
            ("b2", (e,), h),
        ]
    return [
        ("Wx_fwd", (h, c), c + h),
        ("Wh_fwd", (h, h), c + h),
        ("b_fwd", (h,), c + h),
        ("Wx_bwd", (h, c), c + h),
        ("Wh_bwd", (h, h), c + h),
        ("b_bwd", (h,), c + h),
        ("Wo", (e, 2 * h), 2 * h),
        ("bo", (e,), 2 * h),
    ]


def parameter_count(config: EncoderConfig) -> int:
    """Number of scalars implied by the config."""
    return int(sum(np.prod(shape) for _, shape, _ in parameter_layout(config)))


def unpack(config: EncoderConfig, flat: np.ndarray) -> Dict[str, np.ndarray]:
    """Named views into a flat parameter (or gradient) vector."""
    blocks: Dict[str, np.ndarray] = {}
    offset = 0
    for name, shape, _ in parameter_layout(config):
        size = int(np.prod(shape))
        blocks[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return blocks


@dataclass(frozen=True)
class EmbeddingModel:
    """Encoder config plus its flat parameter vector."""
    config: EncoderConfig
    parameters: np.ndarray

    def __post_init__(self):
        params = np.array(self.parameters, dtype=np.float64).ravel()
        expected = parameter_count(self.config)
        if params.size != expected:
            raise ValueError(
                f"Parameter vector has {params.size} entries, config {self.config.kind.value} implies {expected}"
            )
        params.setflags(write=False)
        object.__setattr__(self, "parameters", params)

    def with_parameters(self, parameters: np.ndarray) -> "EmbeddingModel":
        return EmbeddingModel(config=self.config, parameters=parameters)

    @property
    def blocks(self) -> Dict[str, np.ndarray]:
        return unpack(self.config, self.parameters)


def init_model(config: EncoderConfig) -> EmbeddingModel:
    """
    Draw parameters uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)] per block.

    Args:
        config: Encoder configuration

    Returns:
        Deterministically initialized model
    """
    rng = np.random.default_rng(config.seed)
    pieces = []
    for _, shape, fan_in in parameter_layout(config):
        bound = 1.0 / np.sqrt(fan_in)
        pieces.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    logger.debug(f"Initialized {config.kind.value} encoder with {sum(p.size for p in pieces)} parameters")
    return EmbeddingModel(config=config, parameters=np.concatenate(pieces))


@dataclass
class ForwardCache:
    """Intermediate activations kept for the backward pass."""
    inputs: np.ndarray
    hidden: Dict[str, np.ndarray]
    pre_norm: np.ndarray
    norms: np.ndarray
    features: np.ndarray


def stack_segments(model: EmbeddingModel, segments: Sequence[Segment]) -> np.ndarray:
    """Stack segments into a (batch x time x channels) array after a shape check."""
    cfg = model.config
    expected = (cfg.window_length, cfg.n_channels)
    for segment in segments:
        if segment.values.shape != expected:
            raise ValueError(
                f"Segment at source index {segment.source_index} has shape {segment.values.shape}, "
                f"encoder expects {expected}"
            )
    if not segments:
        return np.zeros((0,) + expected)
    return np.stack([segment.values for segment in segments])


def forward_batch(model: EmbeddingModel, inputs: np.ndarray) -> ForwardCache:
    """
    Embed a (batch x time x channels) array.

    Raises:
        DegenerateEmbeddingError: if any pre-normalization output is zero
    """
    cfg = model.config
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[1:] != (cfg.window_length, cfg.n_channels):
        raise ValueError(
            f"Input batch shape {inputs.shape} does not match (batch, {cfg.window_length}, {cfg.n_channels})"
        )
    p = model.blocks

    if cfg.kind is EncoderKind.MEAN_POOL_MLP:
        pooled = inputs.mean(axis=1)
        h1 = np.tanh(pooled @ p["W1"].T + p["b1"])
        pre_norm = h1 @ p["W2"].T + p["b2"]
        hidden = {"pooled": pooled, "h1": h1}
    else:
        batch, steps, _ = inputs.shape
        h = cfg.hidden_dim
        fwd = np.zeros((steps, batch, h))
        bwd = np.zeros((steps, batch, h))
        state = np.zeros((batch, h))
        for t in range(steps):
            state = np.tanh(inputs[:, t, :] @ p["Wx_fwd"].T + state @ p["Wh_fwd"].T + p["b_fwd"])
            fwd[t] = state
        state = np.zeros((batch, h))
        for t in reversed(range(steps)):
            state = np.tanh(inputs[:, t, :] @ p["Wx_bwd"].T + state @ p["Wh_bwd"].T + p["b_bwd"])
            bwd[t] = state
        concat = np.concatenate([fwd[-1], bwd[0]], axis=1)
        pre_norm = concat @ p["Wo"].T + p["bo"]
        hidden = {"fwd": fwd, "bwd": bwd, "concat": concat}

    norms = np.linalg.norm(pre_norm, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateEmbeddingError(f"Pre-normalization embedding of batch item {bad} is the zero vector")
    features = pre_norm / norms[:, None]
    return ForwardCache(inputs=inputs, hidden=hidden, pre_norm=pre_norm, norms=norms, features=features)


def backward_batch(model: EmbeddingModel, cache: ForwardCache, output_gradients: np.ndarray) -> np.ndarray:
    """
    Gradient of sum_b g_b . f(x_b) with respect to every parameter.

    Args:
        model: Model used for the forward pass
        cache: Forward cache of the same batch
        output_gradients: (batch x embed) gradients with respect to the features

    Returns:
        Flat gradient vector in canonical order
    """
    cfg = model.config
    grads_out = np.asarray(output_gradients, dtype=np.float64)
    if grads_out.shape != cache.features.shape:
        raise ValueError(f"Output gradient shape {grads_out.shape} does not match features {cache.features.shape}")

    p = model.blocks
    flat = np.zeros_like(model.parameters, dtype=np.float64)
    g = unpack(cfg, flat)

    # Normalization Jacobian (I - f f^T) / ||v||
    f = cache.features
    dv = (grads_out - f * np.sum(f * grads_out, axis=1, keepdims=True)) / cache.norms[:, None]

    if cfg.kind is EncoderKind.MEAN_POOL_MLP:
        h1 = cache.hidden["h1"]
        g["W2"][...] = dv.T @ h1
        g["b2"][...] = dv.sum(axis=0)
        dz1 = (dv @ p["W2"]) * (1.0 - h1 ** 2)
        g["W1"][...] = dz1.T @ cache.hidden["pooled"]
        g["b1"][...] = dz1.sum(axis=0)
        return flat

    h = cfg.hidden_dim
    fwd, bwd = cache.hidden["fwd"], cache.hidden["bwd"]
    x = cache.inputs
    steps = x.shape[1]
    g["Wo"][...] = dv.T @ cache.hidden["concat"]
    g["bo"][...] = dv.sum(axis=0)
    dconcat = dv @ p["Wo"]

    dh = dconcat[:, :h]
    for t in reversed(range(steps)):
        dz = dh * (1.0 - fwd[t] ** 2)
        prev = fwd[t - 1] if t > 0 else np.zeros_like(dz)
        g["Wx_fwd"][...] += dz.T @ x[:, t, :]
        g["Wh_fwd"][...] += dz.T @ prev
        g["b_fwd"][...] += dz.sum(axis=0)
        dh = dz @ p["Wh_fwd"]

    dh = dconcat[:, h:]
    for t in range(steps):
        dz = dh * (1.0 - bwd[t] ** 2)
        prev = bwd[t + 1] if t + 1 < steps else np.zeros_like(dz)
        g["Wx_bwd"][...] += dz.T @ x[:, t, :]
        g["Wh_bwd"][...] += dz.T @ prev
        g["b_bwd"][...] += dz.sum(axis=0)
        dh = dz @ p["Wh_bwd"]

    return flat


def forward(model: EmbeddingModel, segment: Segment) -> FeatureVector:
    """Embed one segment into a unit-norm feature vector."""
    cache = forward_batch(model, stack_segments(model, [segment]))
    return FeatureVector(cache.features[0])


def backward(model: EmbeddingModel, segment: Segment, output_gradient: np.ndarray) -> np.ndarray:
    """Parameter gradient of output_gradient . f(segment)."""
    output_gradient = np.asarray(output_gradient, dtype=np.float64)
    if output_gradient.shape != (model.config.embed_dim,):
        raise ValueError(
            f"Output gradient has shape {output_gradient.shape}, expected ({model.config.embed_dim},)"
        )
    cache = forward_batch(model, stack_segments(model, [segment]))
    return backward_batch(model, cache, output_gradient[None, :])


def embed_batch(model: EmbeddingModel, segments: Sequence[Segment], chunk_size: Optional[int] = 1024) -> np.ndarray:
    """Features for many segments (n x embed), computed in chunks."""
    if not segments:
        return np.zeros((0, model.config.embed_dim))
    chunk_size = chunk_size or len(segments)
    parts = []
    for start in range(0, len(segments), chunk_size):
        batch = stack_segments(model, segments[start:start + chunk_size])
        parts.append(forward_batch(model, batch).features)
    return np.concatenate(parts, axis=0)
