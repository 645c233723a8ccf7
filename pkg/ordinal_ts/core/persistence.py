"""
Model checkpoint format.

Binary layout (little-endian):
    magic  b"OQEM"
    uint32 version
    int64  kind code, n_channels, hidden_dim, embed_dim, window_length, seed, parameter count
    float64[parameter count] parameters in canonical order

A JSON sidecar (same stem, ``.json``) mirrors the config for inspection.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .encoder import EmbeddingModel, EncoderConfig, EncoderKind, parameter_count

logger = logging.getLogger(__name__)

MAGIC = b"OQEM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI7q")
_KIND_CODES = {EncoderKind.BI_RECURRENT: 1, EncoderKind.MEAN_POOL_MLP: 2}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def save_model(model: EmbeddingModel, path: Union[str, Path]) -> Path:
    """Write the binary checkpoint and its JSON sidecar; returns the binary path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        _KIND_CODES[cfg.kind],
        cfg.n_channels,
        cfg.hidden_dim,
        cfg.embed_dim,
        cfg.window_length,
        cfg.seed,
        model.parameters.size,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(model.parameters.astype("<f8").tobytes())

    sidecar = {
        "format_version": FORMAT_VERSION,
        "parameter_count": int(model.parameters.size),
        "config": cfg.model_dump(mode="json"),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Saved {cfg.kind.value} model ({model.parameters.size} parameters) to {path}")
    return path


def load_model(path: Union[str, Path]) -> EmbeddingModel:
    """Read a checkpoint written by :func:`save_model`."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path} is too short to be a model checkpoint")

    magic, version, kind_code, n_channels, hidden, embed, window, seed, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path} is not a model checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ValueError(f"Unsupported checkpoint version {version} in {path}")
    if kind_code not in _CODE_KINDS:
        raise ValueError(f"Unknown encoder kind code {kind_code} in {path}")

    config = EncoderConfig(
        kind=_CODE_KINDS[kind_code],
        n_channels=n_channels,
        hidden_dim=hidden,
        embed_dim=embed,
        window_length=window,
        seed=seed,
    )
    expected = parameter_count(config)
    if count != expected:
        raise ValueError(f"Checkpoint declares {count} parameters, config implies {expected}")
    payload = data[_HEADER.size:]
    if len(payload) != 8 * count:
        raise ValueError(f"Checkpoint payload holds {len(payload) // 8} floats, expected {count}")

    parameters = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return EmbeddingModel(config=config, parameters=parameters)
