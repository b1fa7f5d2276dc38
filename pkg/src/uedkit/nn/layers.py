"""Trainable layers: linear, convolution, batch norm.

Weight init is uniform with the 1/sqrt(fan_in) bound throughout.  BatchNorm
keeps float running statistics outside the autodiff graph: training mode
normalises by biased batch moments and updates the running buffers with
momentum 0.1 (unbiased variance); eval mode normalises by the running
buffers.  eps = 1e-5.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from . import engine
from .base import Module
from .engine import Tensor


def _uniform_init(rng: Rng, shape, fan_in: int, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: Rng, dtype=np.float32):
        self.n_in, self.n_out = n_in, n_out
        self.w = Tensor(_uniform_init(rng, (n_in, n_out), n_in, dtype), requires_grad=True)
        self.b = Tensor(_uniform_init(rng, (n_out,), n_in, dtype), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return engine.matmul(x, self.w) + self.b


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: Rng, dtype=np.float32):
        assert kernel % 2 == 1, "same-padding convolution needs an odd kernel"
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        fan = c_in * kernel
        self.w = Tensor(_uniform_init(rng, (c_out, c_in, kernel), fan, dtype), requires_grad=True)
        self.b = Tensor(_uniform_init(rng, (c_out,), fan, dtype), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return engine.conv1d(x, self.w, self.b)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: Rng, dtype=np.float32):
        assert kernel % 2 == 1, "same-padding convolution needs an odd kernel"
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        fan = c_in * kernel * kernel
        self.w = Tensor(
            _uniform_init(rng, (c_out, c_in, kernel, kernel), fan, dtype), requires_grad=True
        )
        self.b = Tensor(_uniform_init(rng, (c_out,), fan, dtype), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return engine.conv2d(x, self.w, self.b)


class BatchNorm(Module):
    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, n_channels: int, spatial_dims: int, dtype=np.float32):
        self.n_channels = n_channels
        self.spatial_dims = spatial_dims
        self.gamma = Tensor(np.ones(n_channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(n_channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(n_channels, dtype=dtype)
        self.running_var = np.ones(n_channels, dtype=dtype)

    def _running_arrays(self):
        return [self.running_mean, self.running_var]

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        axes = (0,) + tuple(range(2, 2 + self.spatial_dims))
        bshape = (1, self.n_channels) + (1,) * self.spatial_dims
        if train:
            mu = engine.tmean(x, axis=axes, keepdims=True)
            centered = x - mu
            var = engine.tmean(engine.mul(centered, centered), axis=axes, keepdims=True)
            count = x.data.size // self.n_channels
            unbiased = var.data.reshape(self.n_channels) * (
                count / max(count - 1, 1)
            )
            m = self.MOMENTUM
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu.data.reshape(
                self.n_channels
            )
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
            inv = engine.pow_const(var + self.EPS, -0.5)
            xn = engine.mul(centered, inv)
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.EPS)
            xn = (x - self.running_mean.reshape(bshape)) * inv.reshape(bshape)
        return xn * engine.reshape(self.gamma, bshape) + engine.reshape(self.beta, bshape)
