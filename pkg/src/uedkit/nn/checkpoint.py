"""Model persistence and the extractor factory.

Checkpoint container (little-endian)::

    magic    4 bytes  b"UEDM"
    version  u16
    hdr_len  u32      length of the UTF-8 JSON config that follows
    config   hdr_len bytes
    n_params u64      then n_params float32 (the trainable parameter vector)
    n_stats  u64      then n_stats float32 (batch-norm running mean/var, walk order)

The config dict is everything needed to rebuild the architecture; stored
parameters then overwrite the fresh initialisation.  PCA "models" reuse the
same container with components+mean as the parameter vector.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import DataFormatError, ValidationError
from ..rng import Rng
from .models import (
    CnnEncoder,
    FeatureExtractor,
    KanEncoder,
    PcaExtractor,
    cnn1d_config,
    cnn2d_config,
    make_bypass,
)

MAGIC = b"UEDM"
VERSION = 1

KAN_GRID_RAW = 10
KAN_GRID_CONSTELLATION = 6


def extractor_config(
    kind: str,
    modality: str,
    feature_size: int = 20,
    trace_len: int = 256,
    grid_k: int = 60,
    kan_grid: int | None = None,
    svd_init: bool = False,
    dtype: str = "float32",
) -> dict:
    if kan_grid is None:
        kan_grid = KAN_GRID_RAW if modality == "raw_iq" else KAN_GRID_CONSTELLATION
    return {
        "kind": kind,
        "modality": modality,
        "feature_size": feature_size,
        "trace_len": trace_len,
        "grid_k": grid_k,
        "kan_grid": kan_grid,
        "svd_init": bool(svd_init),
        "dtype": dtype,
    }


def input_shape_for(config: dict) -> tuple:
    if config["modality"] == "raw_iq":
        return (2, config["trace_len"])
    return (1, config["grid_k"], config["grid_k"])


def build_extractor(config: dict, rng: Rng, svd: tuple | None = None):
    """Fresh extractor from a config dict.

    `svd` is the optional (components, mean) pair for the bypass; when
    svd_init is set but svd is None (e.g. rebuilding before loading stored
    parameters), the bypass is built with placeholder zeros of the right shape.
    """
    kind = config["kind"]
    shape = input_shape_for(config)
    d = config["feature_size"]
    dtype = np.dtype(config.get("dtype", "float32")).type
    if kind == "pca":
        if svd is None:
            p = int(np.prod(shape))
            svd = (np.zeros((d, p)), np.zeros(p))
        return PcaExtractor(svd[0], svd[1], shape)
    if kind == "cnn1d":
        base = CnnEncoder(cnn1d_config(config["trace_len"], d), rng.derive("cnn"), dtype)
    elif kind == "cnn2d":
        base = CnnEncoder(cnn2d_config(config["grid_k"], d), rng.derive("cnn"), dtype)
    elif kind == "kan":
        base = KanEncoder(
            shape,
            config["kan_grid"],
            rng.derive("kan"),
            feature_size=d,
            constellation=config["modality"] == "constellation",
            dtype=dtype,
        )
    else:
        raise ValidationError(f"unknown extractor kind {kind!r}")
    bypass = None
    if config.get("svd_init"):
        p = int(np.prod(shape))
        if svd is None:
            svd = (np.zeros((d, p)), np.zeros(p))
        bypass = make_bypass(np.asarray(svd[0]), np.asarray(svd[1]), rng.derive("bypass"), dtype)
    return FeatureExtractor(kind, base, shape, d, bypass=bypass, config=dict(config))


def save_checkpoint(path, config: dict, params: np.ndarray, stats: np.ndarray) -> None:
    header = json.dumps(config, sort_keys=True).encode("utf-8")
    params = np.ascontiguousarray(params, dtype="<f4")
    stats = np.ascontiguousarray(stats, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
        fh.write(struct.pack("<Q", stats.size))
        fh.write(stats.tobytes())


def save_model(path, model, config: dict) -> None:
    save_checkpoint(path, config, model.param_vector(), model.stats_vector())


def load_checkpoint(path):
    """Returns (config, params, stats)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError(f"bad checkpoint magic {blob[:4]!r}")
    version, hdr_len = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    offset = 10
    try:
        config = json.loads(blob[offset : offset + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"corrupt checkpoint header: {exc}") from exc
    offset += hdr_len
    (n_params,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    params = np.frombuffer(blob, dtype="<f4", count=n_params, offset=offset).copy()
    offset += 4 * n_params
    (n_stats,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    stats = np.frombuffer(blob, dtype="<f4", count=n_stats, offset=offset).copy()
    return config, params, stats


def load_model(path):
    """Rebuild an extractor from a checkpoint file."""
    config, params, stats = load_checkpoint(path)
    model = build_extractor(config, Rng(0))
    if config["kind"] == "pca":
        shape = input_shape_for(config)
        p = int(np.prod(shape))
        d = config["feature_size"]
        components = params[: d * p].reshape(d, p).astype(np.float64)
        mean = params[d * p :].astype(np.float64)
        return PcaExtractor(components, mean, shape)
    model.set_param_vector(params)
    model.set_stats_vector(stats)
    return model
