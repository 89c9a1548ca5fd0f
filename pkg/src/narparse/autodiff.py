"""Minimal reverse-mode autodiff over numpy arrays (float32 by default).

A ``Tensor`` wraps a numpy array plus an optional gradient. Ops build a
graph of backward closures; ``Tensor.backward()`` walks it in reverse
topological order. Only what the parser models need is implemented: no
general broadcasting beyond trailing-axis and leading-batch cases.

Models run in float32. The :func:`precision` context manager switches new
tensors to another float dtype — central-difference gradient checks need
float64 arithmetic to resolve small gradient entries at tight tolerances.

Reductions like softmax/log-softmax/layernorm use the fused kernels from
:mod:`narparse.kernels` for both forward and backward.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels

_grad_enabled = True
DTYPE = np.float32


@contextmanager
def precision(dtype):
    """Run enclosed tensor ops in ``dtype`` (e.g. np.float64)."""
    global DTYPE
    prev = DTYPE
    DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        DTYPE = prev


@contextmanager
def no_grad():
    """Disable graph construction (eval-mode forward passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # make numpy defer to our __radd__/__rmul__ instead of broadcasting
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph -------------------------------------------------------------

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if not node.requires_grad:
                    # free intermediate grads as we go
                    node.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(*parents):
    return _grad_enabled and any(p.requires_grad or p._parents for p in parents)


def _unbroadcast(g, shape):
    """Sum gradient g down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bwd(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bwd(g):
        a._accum(_unbroadcast(g * b.data, a.data.shape))
        b._accum(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = np.matmul(a.data, b.data)
    if not _track(a, b):
        return Tensor(out_data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a._accum(_unbroadcast(ga, a.data.shape))
        b._accum(_unbroadcast(gb, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        a._accum(g * (a.data > 0.0))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        a._accum(g.reshape(a.data.shape))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def transpose(a, axes):
    a = as_tensor(a)
    out_data = np.transpose(a.data, axes)
    inv = np.argsort(axes)
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        a._accum(np.transpose(g, inv))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _track(*tensors):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return Tensor(out_data, _parents=tuple(tensors), _backward=bwd)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a._accum(np.broadcast_to(gg, a.data.shape).astype(a.data.dtype))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def embedding(table, ids):
    """Gather rows of ``table`` (Tensor [n, d]) by integer array ``ids``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]
    if not _track(table):
        return Tensor(out_data)

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        table._accum(gt)

    return Tensor(out_data, _parents=(table,), _backward=bwd)


def softmax(a, mask=None):
    """Softmax over the last axis; ``mask`` is an additive float array
    (0 for keep, large negative for drop) broadcastable to a's shape."""
    a = as_tensor(a)
    x = a.data if mask is None else a.data + mask
    p = kernels.softmax(np.ascontiguousarray(x, dtype=DTYPE))
    if not _track(a):
        return Tensor(p)

    def bwd(g):
        a._accum(kernels.softmax_backward(p, np.ascontiguousarray(g)))

    return Tensor(p, _parents=(a,), _backward=bwd)


def log_softmax(a):
    a = as_tensor(a)
    y = kernels.log_softmax(np.ascontiguousarray(a.data))
    if not _track(a):
        return Tensor(y)

    def bwd(g):
        a._accum(kernels.log_softmax_backward(y, np.ascontiguousarray(g)))

    return Tensor(y, _parents=(a,), _backward=bwd)


def layer_norm(a, gain, bias, eps=1e-5):
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    y, xhat, rstd = kernels.layernorm_forward(a.data, gain.data, bias.data, eps)
    if not _track(a, gain, bias):
        return Tensor(y)

    def bwd(g):
        dx, dgain, dbias = kernels.layernorm_backward(
            np.ascontiguousarray(g), xhat, rstd, gain.data)
        a._accum(dx)
        gain._accum(dgain)
        bias._accum(dbias)

    return Tensor(y, _parents=(a, gain, bias), _backward=bwd)


def dropout(a, rate, rng):
    """Inverted dropout; call only in training mode."""
    a = as_tensor(a)
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return mul(a, keep)


def gather_last(a, ids):
    """out[..., ] = a[..., ids[...]] where ids has a's shape minus last axis."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)
    flat = a.data.reshape(-1, a.data.shape[-1])
    rows = np.arange(flat.shape[0])
    out_data = flat[rows, ids.reshape(-1)].reshape(ids.shape)
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        ga = np.zeros_like(flat)
        ga[rows, ids.reshape(-1)] = g.reshape(-1)
        a._accum(ga.reshape(a.data.shape))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def slice_axis0(a, start, stop):
    a = as_tensor(a)
    out_data = a.data[start:stop]
    if not _track(a):
        return Tensor(out_data)

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[start:stop] = g
        a._accum(ga)

    return Tensor(out_data, _parents=(a,), _backward=bwd)
