"""Trainable-parameter and per-sample FLOP accounting.

FLOP model (documented, inference of one sample through the extractor):

* 2 FLOPs per multiply-add in convolution, linear, and spline-coefficient
  accumulation (including the per-edge silu weight and spline scaler);
* B-spline basis evaluation costed at 8 * (G + order) FLOPs per input node
  (bases are shared across output features);
* batch norm, pooling, and activation evaluation are not counted.

Parameter totals count every trainable scalar.  `spline_coefficients` counts
only the per-edge basis coefficients, the convention the published per-model
"Params" figures follow for KANs (their base/scaler weights would add
2 * n_in * n_out on top, which `total` includes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kan import KanLayer
from .models import CnnDecoder, CnnEncoder, FeatureExtractor, KanDecoder, KanEncoder, PcaExtractor


@dataclass
class ParamCount:
    total: int
    spline_coefficients: int


def _walk_kan_layers(module):
    if isinstance(module, KanLayer):
        yield module
    if hasattr(module, "_children"):
        for child in module._children():
            yield from _walk_kan_layers(child)


def count_params(model) -> ParamCount:
    if isinstance(model, PcaExtractor):
        return ParamCount(total=model.components.size + model.mean.size, spline_coefficients=0)
    total = sum(p.data.size for p in model.params())
    spline = sum(layer.coef.data.size for layer in _walk_kan_layers(model))
    return ParamCount(total=int(total), spline_coefficients=int(spline))


def _cnn_flops(enc: CnnEncoder) -> int:
    cfg = enc.cfg
    sizes = cfg.spatial_sizes()
    flops = 0
    c_in = cfg.in_channels
    for (c_out, kernel), size in zip(cfg.blocks, sizes[:-1]):
        taps = c_in * kernel**cfg.dims
        flops += 2 * int(np.prod(size)) * c_out * taps
        c_in = c_out
    flops += 2 * cfg.flat_dim * cfg.feature_size
    return flops


def _kan_flops(layer: KanLayer) -> int:
    cfg = layer.cfg
    mix = 2 * cfg.n_in * cfg.n_out * cfg.n_bases  # coefficient accumulation
    silu_path = 2 * cfg.n_in * cfg.n_out  # w_b * silu(x) accumulation
    scaler = 2 * cfg.n_in * cfg.n_out  # w_s scaling
    bases = 8 * cfg.n_bases * cfg.n_in  # shared basis evaluation per input node
    return mix + silu_path + scaler + bases


def count_flops(model) -> int:
    if isinstance(model, PcaExtractor):
        p = model.mean.size
        return 2 * p * model.feature_size + p
    if isinstance(model, FeatureExtractor):
        flops = count_flops(model.base)
        if model.bypass is not None:
            flops += 2 * model.bypass.n_in * model.bypass.n_out + model.feature_size
        return flops
    if isinstance(model, CnnEncoder):
        return _cnn_flops(model)
    if isinstance(model, (KanEncoder, KanDecoder)):
        return _kan_flops(model.layer)
    if isinstance(model, KanLayer):
        return _kan_flops(model)
    if isinstance(model, CnnDecoder):
        cfg = model.cfg
        sizes = cfg.spatial_sizes()
        targets = sizes[-2::-1]
        channels = [cfg.blocks[3][0], cfg.blocks[2][0], cfg.blocks[1][0], cfg.blocks[0][0], cfg.in_channels]
        kernels = [k for _, k in reversed(cfg.blocks)]
        flops = 2 * cfg.feature_size * cfg.flat_dim
        for i in range(4):
            taps = channels[i] * kernels[i] ** cfg.dims
            flops += 2 * int(np.prod(targets[i])) * channels[i + 1] * taps
        return flops
    raise TypeError(f"no FLOP model for {type(model).__name__}")
