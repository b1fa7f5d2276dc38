"""Reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps an ndarray plus an optional closure that maps the output
cotangent to parent cotangents.  Graphs are built eagerly by the op functions
below and freed after `backward()`.  Ops preserve the dtype of their inputs
(float32 for training, float64 for gradient checks), and a tensor only
records its parents when gradients can actually flow to a leaf, so forward
passes over plain data build no graph.

Convolutions use im2col + one GEMM; pooling/upsampling scatter through
argmax/segment indices.  Everything is stride-1 "same" convolution and
window-2 pooling because that is all the encoders need.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            if node._parents:  # intermediate node: free its cotangent
                node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        return mul(self, pow_const(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, parents, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data**p
    return _node(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    need_a, need_b = a.requires_grad, b.requires_grad
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T if need_a else None, a.data.T @ g if need_b else None),
    )


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _node(
        a.data.transpose(axes) if axes is not None else a.data.T,
        (a,),
        lambda g: (g.transpose(inv) if inv is not None else g.T,),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * (0.5 / out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _node(a.data * s, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def pick(a, indices) -> Tensor:
    """Row-wise gather: out[i] = a[i, indices[i]]."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    rows = np.arange(a.shape[0])

    def vjp(g):
        out = np.zeros_like(a.data)
        out[rows, idx] = g
        return (out,)

    return _node(a.data[rows, idx], (a,), vjp)


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * (e / s),)

    return _node(out, (a,), vjp)


def conv1d(x, w, b) -> Tensor:
    """Stride-1 'same' 1-D convolution; x (B,Cin,L), w (Cout,Cin,k), odd k."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    batch, cin, length = x.shape
    cout, _, k = w.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    cols = (
        sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3).reshape(batch * length, cin * k)
    )
    wmat = w.data.reshape(cout, cin * k)
    out = (cols @ wmat.T).reshape(batch, length, cout).transpose(0, 2, 1) + b.data[None, :, None]
    need_x = x.requires_grad

    def vjp(g):
        g2 = g.transpose(0, 2, 1).reshape(batch * length, cout)
        grad_w = (g2.T @ cols).reshape(w.shape)
        grad_b = g.sum(axis=(0, 2))
        grad_x = None
        if need_x:
            gcols = (g2 @ wmat).reshape(batch, length, cin, k).transpose(0, 2, 1, 3)
            gxp = np.zeros_like(xp)
            for kk in range(k):
                gxp[:, :, kk : kk + length] += gcols[:, :, :, kk]
            grad_x = gxp[:, :, pad : pad + length]
        return grad_x, grad_w, grad_b

    return _node(out, (x, w, b), vjp)


def conv2d(x, w, b) -> Tensor:
    """Stride-1 'same' 2-D convolution; x (B,Cin,H,W), w (Cout,Cin,k,k), odd k."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    batch, cin, h, wdt = x.shape
    cout, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = (
        sliding_window_view(xp, (k, k), axis=(2, 3))
        .transpose(0, 2, 3, 1, 4, 5)
        .reshape(batch * h * wdt, cin * k * k)
    )
    wmat = w.data.reshape(cout, cin * k * k)
    out = (cols @ wmat.T).reshape(batch, h, wdt, cout).transpose(0, 3, 1, 2)
    out = out + b.data[None, :, None, None]
    need_x = x.requires_grad

    def vjp(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(batch * h * wdt, cout)
        grad_w = (g2.T @ cols).reshape(w.shape)
        grad_b = g.sum(axis=(0, 2, 3))
        grad_x = None
        if need_x:
            gcols = (g2 @ wmat).reshape(batch, h, wdt, cin, k, k).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for ki in range(k):
                for kj in range(k):
                    gxp[:, :, ki : ki + h, kj : kj + wdt] += gcols[:, :, :, :, ki, kj]
            grad_x = gxp[:, :, pad : pad + h, pad : pad + wdt]
        return grad_x, grad_w, grad_b

    return _node(out, (x, w, b), vjp)


def maxpool1d(x) -> Tensor:
    """Window-2 stride-2 max pool; odd trailing element is dropped."""
    x = as_tensor(x)
    batch, ch, length = x.shape
    lo = length // 2
    r = x.data[:, :, : 2 * lo].reshape(batch, ch, lo, 2)
    arg = r.argmax(axis=3)
    out = np.take_along_axis(r, arg[..., None], axis=3)[..., 0]

    def vjp(g):
        gr = np.zeros_like(r)
        np.put_along_axis(gr, arg[..., None], g[..., None], axis=3)
        gx = np.zeros_like(x.data)
        gx[:, :, : 2 * lo] = gr.reshape(batch, ch, 2 * lo)
        return (gx,)

    return _node(out, (x,), vjp)


def maxpool2d(x) -> Tensor:
    """2x2 stride-2 max pool; odd trailing rows/cols are dropped."""
    x = as_tensor(x)
    batch, ch, h, w = x.shape
    ho, wo = h // 2, w // 2
    r = (
        x.data[:, :, : 2 * ho, : 2 * wo]
        .reshape(batch, ch, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, ch, ho, wo, 4)
    )
    arg = r.argmax(axis=4)
    out = np.take_along_axis(r, arg[..., None], axis=4)[..., 0]

    def vjp(g):
        gr = np.zeros_like(r)
        np.put_along_axis(gr, arg[..., None], g[..., None], axis=4)
        gr = gr.reshape(batch, ch, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(x.data)
        gx[:, :, : 2 * ho, : 2 * wo] = gr.reshape(batch, ch, 2 * ho, 2 * wo)
        return (gx,)

    return _node(out, (x,), vjp)


def _nearest_index(n_out: int, n_in: int) -> np.ndarray:
    return (np.arange(n_out) * n_in) // n_out


def upsample_nearest_1d(x, out_len: int) -> Tensor:
    x = as_tensor(x)
    length = x.shape[2]
    idx = _nearest_index(out_len, length)
    starts = np.searchsorted(idx, np.arange(length))

    def vjp(g):
        return (np.add.reduceat(g, starts, axis=2),)

    return _node(x.data[:, :, idx], (x,), vjp)


def upsample_nearest_2d(x, out_hw) -> Tensor:
    x = as_tensor(x)
    h, w = x.shape[2], x.shape[3]
    ho, wo = out_hw
    ridx, cidx = _nearest_index(ho, h), _nearest_index(wo, w)
    rstarts = np.searchsorted(ridx, np.arange(h))
    cstarts = np.searchsorted(cidx, np.arange(w))

    def vjp(g):
        g = np.add.reduceat(g, rstarts, axis=2)
        return (np.add.reduceat(g, cstarts, axis=3),)

    return _node(x.data[:, :, ridx[:, None], cidx[None, :]], (x,), vjp)
