"""Single Kolmogorov-Arnold layer on B-spline bases.

Each edge (input node i, output feature j) carries a learnable univariate
function

    psi_ij(x) = w_b[j,i] * silu(x) + w_s[j,i] * sum_k coef[j,i,k] * B_k(x)

with the B_k a shared family of degree-`spline_order` B-splines over a uniform
grid of `grid_size` intervals on [-1, 1].  With degree 4 this yields exactly
``grid_size + 4`` bases per edge (Cox-de Boor over knots extended 4 steps past
each domain end), matching the G+4 spline-coefficient accounting.  Inputs are
clamped to the domain before basis evaluation; the value 1.0 is treated as
belonging to the last in-domain knot interval so the bases keep summing to 1
on the closed domain.

The whole layer is one autodiff primitive: bases are evaluated once per input
node and shared across output features, and the spline mix is a single GEMM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..rng import Rng
from . import engine
from .base import Module
from .engine import Tensor, _node


@dataclass
class KanLayerConfig:
    n_in: int
    n_out: int
    grid_size: int
    spline_order: int = 4  # Cox-de Boor degree; bases per edge = grid_size + spline_order
    domain: tuple = (-1.0, 1.0)

    @property
    def n_bases(self) -> int:
        return self.grid_size + self.spline_order


def bspline_bases(x: np.ndarray, grid_size: int, order: int, with_derivative: bool = False):
    """Values (and optionally derivatives) of all B-spline bases at x in [-1, 1].

    Returns arrays of shape ``x.shape + (grid_size + order,)``.
    """
    x = np.asarray(x)
    h = 2.0 / grid_size
    knots = (-1.0 + h * np.arange(-order, grid_size + order + 1)).astype(x.dtype)
    xe = x[..., None]
    b = ((xe >= knots[:-1]) & (xe < knots[1:])).astype(x.dtype)
    # x == 1.0 belongs to the last in-domain interval [1 - h, 1], not to [1, 1 + h)
    top = grid_size + order - 1
    at_top = x == 1.0
    b[..., top] = np.where(at_top, x.dtype.type(1.0), b[..., top])
    b[..., top + 1] = np.where(at_top, x.dtype.type(0.0), b[..., top + 1])
    prev = None
    for m in range(1, order + 1):
        inv = x.dtype.type(1.0 / (m * h))
        prev = b
        b = (xe - knots[: -(m + 1)]) * inv * b[..., :-1] + (knots[m + 1 :] - xe) * inv * b[..., 1:]
    if not with_derivative:
        return b
    db = (prev[..., :-1] - prev[..., 1:]) / x.dtype.type(h)
    return b, db


def _silu_np(x: np.ndarray):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


def kan_op(x: Tensor, wb: Tensor, ws: Tensor, coef: Tensor, grid_size: int, order: int) -> Tensor:
    """Fused forward/backward for the KAN layer; x must already lie in [-1, 1]."""
    xd = x.data
    sval, sig = _silu_np(xd)
    need_x = x.requires_grad
    if need_x:
        bases, dbases = bspline_bases(xd, grid_size, order, with_derivative=True)
    else:
        bases = bspline_bases(xd, grid_size, order)
        dbases = None
    batch, n_in = xd.shape
    n_out = wb.shape[0]
    nb = grid_size + order
    scaled = ws.data[:, :, None] * coef.data  # (n_out, n_in, nb)
    flat_bases = bases.reshape(batch, n_in * nb)
    out = sval @ wb.data.T + flat_bases @ scaled.reshape(n_out, -1).T

    def vjp(g):
        grad_wb = g.T @ sval
        t = (g.T @ flat_bases).reshape(n_out, n_in, nb)  # d(out)/d(scaled)
        grad_coef = t * ws.data[:, :, None]
        grad_ws = np.einsum("jik,jik->ji", t, coef.data)
        grad_x = None
        if need_x:
            mix = (g @ scaled.reshape(n_out, -1)).reshape(batch, n_in, nb)
            grad_x = (g @ wb.data) * (sig * (1.0 + xd * (1.0 - sig))) + (mix * dbases).sum(axis=2)
        return grad_x, grad_wb, grad_ws, grad_coef

    return _node(out, (x, wb, ws, coef), vjp)


class KanLayer(Module):
    """w_b = w_s = 1 at init, spline coefficients ~ N(0, 0.1^2)."""

    def __init__(self, cfg: KanLayerConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        self.wb = Tensor(np.ones((cfg.n_out, cfg.n_in), dtype=dtype), requires_grad=True)
        self.ws = Tensor(np.ones((cfg.n_out, cfg.n_in), dtype=dtype), requires_grad=True)
        self.coef = Tensor(
            rng.normal(size=(cfg.n_out, cfg.n_in, cfg.n_bases), std=0.1).astype(dtype),
            requires_grad=True,
        )

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.cfg.n_in:
            raise DimensionError(f"expected {self.cfg.n_in} input nodes, got {x.shape[-1]}")
        clamped = engine.clip(x, *self.cfg.domain)
        return kan_op(clamped, self.wb, self.ws, self.coef, self.cfg.grid_size, self.cfg.spline_order)

    def edge_values(self, x: np.ndarray) -> np.ndarray:
        """psi_ij(x_i) for every edge: (batch, n_out, n_in), no autodiff graph."""
        xd = np.clip(np.asarray(x, dtype=np.float64), *self.cfg.domain)
        sval, _ = _silu_np(xd)
        bases = bspline_bases(xd, self.cfg.grid_size, self.cfg.spline_order)
        spline = np.einsum("bik,jik->bji", bases, self.coef.data.astype(np.float64))
        return self.wb.data[None].astype(np.float64) * sval[:, None, :] + self.ws.data[
            None
        ].astype(np.float64) * spline

    def edge_derivatives(self, x: np.ndarray) -> np.ndarray:
        """Analytic d psi_ij / d x_i at x: (batch, n_out, n_in)."""
        xd = np.clip(np.asarray(x, dtype=np.float64), *self.cfg.domain)
        sval, sig = _silu_np(xd)
        _, dbases = bspline_bases(
            xd, self.cfg.grid_size, self.cfg.spline_order, with_derivative=True
        )
        dsilu = sig * (1.0 + xd * (1.0 - sig))
        dspline = np.einsum("bik,jik->bji", dbases, self.coef.data.astype(np.float64))
        return self.wb.data[None].astype(np.float64) * dsilu[:, None, :] + self.ws.data[
            None
        ].astype(np.float64) * dspline
