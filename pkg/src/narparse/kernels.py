"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Every kernel has two implementations with identical semantics. The numba
path is used by default; set ``NARPARSE_NO_NUMBA=1`` before import to force
the numpy path (useful on machines without a working JIT, and for the
benchmark in ``benchmarks/bench_kernels.py``).

All kernels operate on contiguous float arrays (float32 in normal use;
float64 inputs are honored for high-precision gradient checks). 2-D
inputs are (rows, cols) with the reduction over the last axis.
"""

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("NARPARSE_NO_NUMBA", "") not in ("", "0")

if not NUMBA_DISABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        NUMBA_DISABLED = True

USE_NUMBA = not NUMBA_DISABLED


# ---------------------------------------------------------------------------
# numpy reference implementations

def _softmax_np(x):
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def _log_softmax_np(x):
    m = np.max(x, axis=-1, keepdims=True)
    s = x - m
    lse = np.log(np.sum(np.exp(s), axis=-1, keepdims=True))
    return s - lse


def _softmax_bwd_np(p, dy):
    # dx = p * (dy - sum(dy * p))
    inner = np.sum(dy * p, axis=-1, keepdims=True)
    return p * (dy - inner)


def _log_softmax_bwd_np(y, dy):
    # dx = dy - exp(y) * sum(dy)
    return dy - np.exp(y) * np.sum(dy, axis=-1, keepdims=True)


def _layernorm_fwd_np(x, gain, bias, eps):
    mean = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    dt = x.dtype
    return (xhat * gain + bias).astype(dt), xhat.astype(dt), rstd.astype(dt)


def _layernorm_bwd_np(dy, xhat, rstd, gain):
    n = xhat.shape[-1]
    dxhat = dy * gain
    dx = (dxhat - np.mean(dxhat, axis=-1, keepdims=True)
          - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)) * rstd
    dgain = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dbias = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    del n
    dt = dy.dtype
    return dx.astype(dt), dgain.astype(dt), dbias.astype(dt)


def _adam_step_np(param, grad, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# numba implementations (2-D loops; wrappers reshape)

if USE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _softmax_nb(x):
        out = np.empty_like(x)
        rows, cols = x.shape
        for i in range(rows):
            m = x[i, 0]
            for j in range(1, cols):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(cols):
                e = np.exp(x[i, j] - m)
                out[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(cols):
                out[i, j] *= inv
        return out

    @njit(cache=True, fastmath=True)
    def _log_softmax_nb(x):
        out = np.empty_like(x)
        rows, cols = x.shape
        for i in range(rows):
            m = x[i, 0]
            for j in range(1, cols):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(cols):
                s += np.exp(x[i, j] - m)
            lse = m + np.log(s)
            for j in range(cols):
                out[i, j] = x[i, j] - lse
        return out

    @njit(cache=True, fastmath=True)
    def _softmax_bwd_nb(p, dy):
        out = np.empty_like(p)
        rows, cols = p.shape
        for i in range(rows):
            inner = 0.0
            for j in range(cols):
                inner += dy[i, j] * p[i, j]
            for j in range(cols):
                out[i, j] = p[i, j] * (dy[i, j] - inner)
        return out

    @njit(cache=True, fastmath=True)
    def _log_softmax_bwd_nb(y, dy):
        out = np.empty_like(y)
        rows, cols = y.shape
        for i in range(rows):
            s = 0.0
            for j in range(cols):
                s += dy[i, j]
            for j in range(cols):
                out[i, j] = dy[i, j] - np.exp(y[i, j]) * s
        return out

    @njit(cache=True, fastmath=True)
    def _layernorm_fwd_nb(x, gain, bias, eps):
        rows, cols = x.shape
        y = np.empty_like(x)
        xhat = np.empty_like(x)
        rstd = np.empty_like(x[:, :1])
        for i in range(rows):
            mean = 0.0
            for j in range(cols):
                mean += x[i, j]
            mean /= cols
            var = 0.0
            for j in range(cols):
                d = x[i, j] - mean
                var += d * d
            var /= cols
            r = 1.0 / np.sqrt(var + eps)
            rstd[i, 0] = r
            for j in range(cols):
                h = (x[i, j] - mean) * r
                xhat[i, j] = h
                y[i, j] = h * gain[j] + bias[j]
        return y, xhat, rstd

    @njit(cache=True, fastmath=True)
    def _layernorm_bwd_nb(dy, xhat, rstd, gain):
        rows, cols = dy.shape
        dx = np.empty_like(dy)
        dgain = np.zeros_like(dy[0])
        dbias = np.zeros_like(dy[0])
        for i in range(rows):
            mean_dxhat = 0.0
            mean_dxhat_xhat = 0.0
            for j in range(cols):
                d = dy[i, j] * gain[j]
                mean_dxhat += d
                mean_dxhat_xhat += d * xhat[i, j]
                dgain[j] += dy[i, j] * xhat[i, j]
                dbias[j] += dy[i, j]
            mean_dxhat /= cols
            mean_dxhat_xhat /= cols
            r = rstd[i, 0]
            for j in range(cols):
                d = dy[i, j] * gain[j]
                dx[i, j] = (d - mean_dxhat - xhat[i, j] * mean_dxhat_xhat) * r
        return dx, dgain, dbias

    @njit(cache=True, fastmath=True)
    def _adam_step_nb(param, grad, m, v, lr, beta1, beta2, eps, t):
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for i in range(param.size):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            param[i] -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# public wrappers: accept any trailing-axis layout, dispatch on USE_NUMBA

def _float_dtype(x):
    # float32 everywhere except when the caller is already in float64
    # (e.g. a high-precision gradient check)
    return np.float64 if getattr(x, "dtype", None) == np.float64 else np.float32


def _as2d(x):
    x = np.ascontiguousarray(x, dtype=_float_dtype(x))
    return x.reshape(-1, x.shape[-1])


def softmax(x):
    """Softmax over the last axis."""
    shape = x.shape
    if USE_NUMBA:
        return _softmax_nb(_as2d(x)).reshape(shape)
    dt = _float_dtype(x)
    return _softmax_np(np.asarray(x, dtype=dt)).astype(dt)


def log_softmax(x):
    """Log-softmax over the last axis."""
    shape = x.shape
    if USE_NUMBA:
        return _log_softmax_nb(_as2d(x)).reshape(shape)
    dt = _float_dtype(x)
    return _log_softmax_np(np.asarray(x, dtype=dt)).astype(dt)


def softmax_backward(p, dy):
    shape = p.shape
    if USE_NUMBA:
        return _softmax_bwd_nb(_as2d(p), _as2d(dy)).reshape(shape)
    return _softmax_bwd_np(p, dy).astype(_float_dtype(p))


def log_softmax_backward(y, dy):
    shape = y.shape
    if USE_NUMBA:
        return _log_softmax_bwd_nb(_as2d(y), _as2d(dy)).reshape(shape)
    return _log_softmax_bwd_np(y, dy).astype(_float_dtype(y))


def layernorm_forward(x, gain, bias, eps=1e-5):
    shape = x.shape
    if USE_NUMBA:
        y, xhat, rstd = _layernorm_fwd_nb(_as2d(x), gain, bias, np.float32(eps))
        return y.reshape(shape), xhat.reshape(shape), rstd.reshape(shape[:-1] + (1,))
    y, xhat, rstd = _layernorm_fwd_np(np.asarray(x, _float_dtype(x)), gain, bias, eps)
    return y, xhat, rstd


def layernorm_backward(dy, xhat, rstd, gain):
    shape = dy.shape
    if USE_NUMBA:
        dx, dgain, dbias = _layernorm_bwd_nb(
            _as2d(dy), _as2d(xhat),
            np.ascontiguousarray(rstd, _float_dtype(rstd)).reshape(-1, 1), gain)
        return dx.reshape(shape), dgain, dbias
    return _layernorm_bwd_np(dy, xhat, rstd, gain)


def adam_step(param, grad, m, v, lr, beta1, beta2, eps, t):
    """In-place fused Adam update with bias correction at step t (1-based)."""
    if USE_NUMBA:
        _adam_step_nb(param.reshape(-1), np.ascontiguousarray(grad, np.float32).reshape(-1),
                      m.reshape(-1), v.reshape(-1),
                      np.float32(lr), np.float32(beta1), np.float32(beta2),
                      np.float32(eps), t)
    else:
        _adam_step_np(param, grad, m, v, np.float32(lr), np.float32(beta1),
                      np.float32(beta2), np.float32(eps), t)
