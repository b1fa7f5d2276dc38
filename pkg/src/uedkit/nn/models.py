"""Encoders, decoders, and the feature-extractor wrapper.

CNN encoders are four blocks of (same-padding convolution, batch norm, 2x max
pool) followed by flatten + linear to the feature size; no extra pointwise
activation, the pooling provides the nonlinearity.  Channel plans differ
between the 1-D and 2-D variants so their trainable-parameter totals land in
the published bands (~80K for the raw-I/Q CNN, ~180K for the constellation
CNN) while keeping per-sample FLOPs near the published costs.

The optional SVD bypass implements the hybrid extractor

    F'(x) = F(x) / 10 + W x + c

where (W, c) is a linear layer initialised from the top-d principal
directions of the training tensors.  The bypass stays trainable:
initialisation, not a constraint.

A KAN encoder flattens its input; on the constellation modality the cell
occupancies are first stretched by 2*K^2*v - 1 (clamped to [-1, 1]) so the
spline domain is actually exercised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ValidationError
from ..rng import Rng
from . import engine
from .base import Module
from .engine import Tensor
from .kan import KanLayer, KanLayerConfig
from .layers import BatchNorm, Conv1d, Conv2d, Linear

FEATURE_SIZE = 20


@dataclass
class CnnConfig:
    dims: int  # 1 or 2
    in_channels: int
    input_size: tuple  # (L,) or (H, W)
    blocks: tuple  # four (out_channels, kernel) pairs
    feature_size: int = FEATURE_SIZE

    def __post_init__(self):
        if len(self.blocks) != 4:
            raise ValidationError("the CNN uses exactly four conv/bn/pool blocks")

    def spatial_sizes(self):
        """Spatial size after each pool, starting from the input size."""
        sizes = [tuple(self.input_size)]
        for _ in self.blocks:
            sizes.append(tuple(s // 2 for s in sizes[-1]))
        return sizes

    @property
    def flat_dim(self) -> int:
        final = self.spatial_sizes()[-1]
        return self.blocks[-1][0] * int(np.prod(final))


def cnn1d_config(trace_len: int = 256, feature_size: int = FEATURE_SIZE) -> CnnConfig:
    return CnnConfig(
        dims=1,
        in_channels=2,
        input_size=(trace_len,),
        blocks=((8, 7), (16, 5), (32, 5), (176, 3)),
        feature_size=feature_size,
    )


def cnn2d_config(grid_k: int = 60, feature_size: int = FEATURE_SIZE) -> CnnConfig:
    return CnnConfig(
        dims=2,
        in_channels=1,
        input_size=(grid_k, grid_k),
        blocks=((8, 5), (16, 3), (48, 3), (256, 3)),
        feature_size=feature_size,
    )


class CnnEncoder(Module):
    def __init__(self, cfg: CnnConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        conv_cls = Conv1d if cfg.dims == 1 else Conv2d
        self.convs, self.bns = [], []
        c_in = cfg.in_channels
        for i, (c_out, kernel) in enumerate(cfg.blocks):
            self.convs.append(conv_cls(c_in, c_out, kernel, rng.derive("conv", i), dtype))
            self.bns.append(BatchNorm(c_out, cfg.dims, dtype))
            c_in = c_out
        self.head = Linear(cfg.flat_dim, cfg.feature_size, rng.derive("head"), dtype)

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        pool = engine.maxpool1d if self.cfg.dims == 1 else engine.maxpool2d
        h = x
        for conv, bn in zip(self.convs, self.bns):
            h = pool(bn(conv(h), train))
        h = engine.reshape(h, (h.shape[0], -1))
        return self.head(h)


class CnnDecoder(Module):
    """Mirror of the encoder: linear, then (nearest upsample, conv, bn) per
    block in reverse channel order; the final block has no batch norm."""

    def __init__(self, cfg: CnnConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        sizes = cfg.spatial_sizes()
        self.targets = sizes[-2::-1]  # upsample targets, smallest first
        self.start_size = sizes[-1]
        conv_cls = Conv1d if cfg.dims == 1 else Conv2d
        channels = [cfg.blocks[3][0], cfg.blocks[2][0], cfg.blocks[1][0], cfg.blocks[0][0], cfg.in_channels]
        kernels = [k for _, k in reversed(cfg.blocks)]
        self.head = Linear(cfg.feature_size, cfg.flat_dim, rng.derive("head"), dtype)
        self.convs, self.bns = [], []
        for i in range(4):
            self.convs.append(
                conv_cls(channels[i], channels[i + 1], kernels[i], rng.derive("conv", i), dtype)
            )
            self.bns.append(BatchNorm(channels[i + 1], cfg.dims, dtype) if i < 3 else None)

    def __call__(self, h: Tensor, train: bool = False) -> Tensor:
        x = self.head(h)
        x = engine.reshape(x, (h.shape[0], self.cfg.blocks[3][0]) + self.start_size)
        for i in range(4):
            if self.cfg.dims == 1:
                x = engine.upsample_nearest_1d(x, self.targets[i][0])
            else:
                x = engine.upsample_nearest_2d(x, self.targets[i])
            x = self.convs[i](x)
            if self.bns[i] is not None:
                x = self.bns[i](x, train)
        return x


class KanEncoder(Module):
    def __init__(
        self,
        input_shape: tuple,
        grid_size: int,
        rng: Rng,
        feature_size: int = FEATURE_SIZE,
        constellation: bool = False,
        dtype=np.float32,
    ):
        self.input_shape = tuple(input_shape)
        self.constellation = constellation
        n_in = int(np.prod(self.input_shape))
        self.layer = KanLayer(
            KanLayerConfig(n_in=n_in, n_out=feature_size, grid_size=grid_size), rng, dtype
        )

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        h = engine.reshape(x, (x.shape[0], -1))
        if self.constellation:
            k2 = float(np.prod(self.input_shape))
            h = engine.clip(h * (2.0 * k2) - 1.0, -1.0, 1.0)
        return self.layer(h)


class KanDecoder(Module):
    """Single KAN layer from the feature space back to the flattened input."""

    def __init__(self, output_shape: tuple, grid_size: int, rng: Rng,
                 feature_size: int = FEATURE_SIZE, dtype=np.float32):
        self.output_shape = tuple(output_shape)
        n_out = int(np.prod(self.output_shape))
        self.layer = KanLayer(
            KanLayerConfig(n_in=feature_size, n_out=n_out, grid_size=grid_size), rng, dtype
        )

    def __call__(self, h: Tensor, train: bool = False) -> Tensor:
        x = self.layer(h)
        return engine.reshape(x, (h.shape[0],) + self.output_shape)


class FeatureExtractor(Module):
    """Base encoder with an optional trainable linear bypass (the SVD hybrid)."""

    def __init__(self, kind: str, base: Module, input_shape: tuple,
                 feature_size: int = FEATURE_SIZE, bypass: Linear | None = None,
                 bypass_scale: float = 0.1, config: dict | None = None):
        self.kind = kind
        self.base = base
        self.input_shape = tuple(input_shape)
        self.feature_size = feature_size
        self.bypass = bypass
        self.bypass_scale = bypass_scale
        self.config = config or {}

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        out = self.base(x, train)
        if self.bypass is not None:
            flat = engine.reshape(x, (x.shape[0], -1))
            out = out * self.bypass_scale + self.bypass(flat)
        return out

    def extract(self, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Eval-mode features for a (n, *input_shape) array, no graph kept."""
        inputs = np.asarray(inputs)
        if inputs.shape[1:] != self.input_shape:
            raise DimensionError(
                f"expected inputs shaped (n, {self.input_shape}), got {inputs.shape}"
            )
        chunks = []
        dtype = self.param_vector().dtype if self.params() else np.float64
        with engine.no_grad():
            for start in range(0, inputs.shape[0], batch_size):
                batch = Tensor(inputs[start : start + batch_size].astype(dtype, copy=False))
                chunks.append(self(batch, train=False).data)
        return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, self.feature_size))


class PcaExtractor:
    """Training-free linear baseline: F(x) = components @ (flatten(x) - mean)."""

    kind = "pca"

    def __init__(self, components: np.ndarray, mean: np.ndarray, input_shape: tuple):
        self.components = np.asarray(components, dtype=np.float64)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.input_shape = tuple(input_shape)
        self.feature_size = self.components.shape[0]

    def extract(self, inputs: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        flat = np.asarray(inputs, dtype=np.float64).reshape(inputs.shape[0], -1)
        return (flat - self.mean) @ self.components.T

    def params(self):
        return []

    def param_vector(self):
        return np.concatenate([self.components.ravel(), self.mean])

    def stats_vector(self):
        return np.zeros(0, dtype=np.float64)


def make_bypass(components: np.ndarray, mean: np.ndarray, rng: Rng, dtype=np.float32) -> Linear:
    """Linear layer initialised to the centered PCA projection W(x - mean)."""
    d, p = components.shape
    lin = Linear(p, d, rng, dtype)
    lin.w.data = components.T.astype(dtype)
    lin.b.data = (-components @ mean).astype(dtype)
    return lin
