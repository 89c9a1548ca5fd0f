"""Reverse-mode autodiff: every op against central finite differences,
plus graph/bookkeeping contracts."""

import numpy as np
import pytest

import narparse.autodiff as ad
from narparse.optim import finite_diff_check


def _param(rng, *shape):
    return ad.Tensor(rng.standard_normal(shape).astype(np.float32) * 0.5,
                     requires_grad=True)


def _check(f, params, rel_tol=5e-2, h=1e-2):
    report = finite_diff_check(f, params, rel_tol=rel_tol, h=h)
    assert report.passed, report.failures[:5]


def test_add_mul_broadcast_grads(rng):
    a = _param(rng, 3, 4)
    b = _param(rng, 4)          # broadcast over leading axis
    c = _param(rng, 3, 1)       # broadcast over trailing axis
    _check(lambda: ((a + b) * c).sum(), {"a": a, "b": b, "c": c})


def test_matmul_grads(rng):
    a = _param(rng, 2, 3, 4)
    b = _param(rng, 4, 5)
    _check(lambda: ad.matmul(a, b).sum(), {"a": a, "b": b})


def test_relu_grads(rng):
    a = _param(rng, 5, 5)
    # nudge away from the kink
    a.data[np.abs(a.data) < 0.05] += 0.2
    _check(lambda: (ad.relu(a) * 2.0).sum(), {"a": a})


def test_reshape_transpose_grads(rng):
    a = _param(rng, 2, 3, 4)
    w = _param(rng, 2, 3, 4)

    def f():
        x = ad.transpose(ad.reshape(a, (3, 2, 4)), (1, 0, 2))
        return (x * w).sum()

    _check(f, {"a": a, "w": w})


def test_concat_grads(rng):
    a = _param(rng, 2, 3)
    b = _param(rng, 2, 5)
    w = _param(rng, 2, 8)
    _check(lambda: (ad.concat([a, b], axis=-1) * w).sum(),
           {"a": a, "b": b, "w": w})


def test_sum_mean_axis_grads(rng):
    a = _param(rng, 3, 4)
    _check(lambda: (a.sum(axis=0) * a.mean(axis=1).sum()).sum(), {"a": a})


def test_embedding_grads(rng):
    table = _param(rng, 6, 4)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    _check(lambda: (ad.embedding(table, ids) * 1.5).sum(), {"t": table})


def test_softmax_grads(rng):
    a = _param(rng, 3, 6)
    w = _param(rng, 3, 6)
    _check(lambda: (ad.softmax(a) * w).sum(), {"a": a, "w": w})


def test_softmax_mask_blocks_positions(rng):
    a = _param(rng, 1, 4)
    mask = np.array([[0.0, 0.0, -1e9, 0.0]], np.float32)
    p = ad.softmax(a, mask=mask)
    assert p.data[0, 2] < 1e-6
    np.testing.assert_allclose(p.data.sum(-1), 1.0, atol=1e-5)


def test_log_softmax_grads(rng):
    a = _param(rng, 2, 7)
    w = _param(rng, 2, 7)
    _check(lambda: (ad.log_softmax(a) * w).sum(), {"a": a, "w": w})


def test_layer_norm_grads(rng):
    a = _param(rng, 3, 8)
    g = ad.Tensor(np.ones(8, np.float32) + 0.1, requires_grad=True)
    b = _param(rng, 8)
    w = _param(rng, 3, 8)
    _check(lambda: (ad.layer_norm(a, g, b) * w).sum(),
           {"a": a, "g": g, "b": b, "w": w})


def test_gather_last_grads(rng):
    a = _param(rng, 3, 5)
    ids = np.array([1, 4, 0])
    _check(lambda: ad.gather_last(a, ids).sum(), {"a": a})


def test_slice_axis0_grads(rng):
    a = _param(rng, 6, 3)
    _check(lambda: (ad.slice_axis0(a, 1, 4) * 2.0).sum(), {"a": a})


def test_dropout_inverted_scaling(rng):
    a = ad.Tensor(np.ones((200, 50), np.float32))
    out = ad.dropout(a, 0.3, rng)
    kept = out.data > 0
    assert abs(kept.mean() - 0.7) < 0.02
    np.testing.assert_allclose(out.data[kept], 1.0 / 0.7, rtol=1e-5)


def test_no_grad_blocks_graph(rng):
    a = _param(rng, 2, 2)
    with ad.no_grad():
        out = (a * 2.0).sum()
    assert out._backward is None and out._parents == ()
    out2 = (a * 2.0).sum()
    assert out2._parents


def test_backward_requires_scalar_seed(rng):
    a = _param(rng, 2, 2)
    with pytest.raises(ValueError):
        (a * 1.0).backward()


def test_tensor_division_by_tensor_rejected(rng):
    a = _param(rng, 2)
    with pytest.raises(TypeError):
        a / a


def test_numpy_operand_defers_to_tensor(rng):
    a = _param(rng, 3)
    arr = np.ones(3, np.float32)
    out = arr * a
    assert isinstance(out, ad.Tensor)
    out = arr + a
    assert isinstance(out, ad.Tensor)


def test_grad_accumulates_over_shared_use(rng):
    a = _param(rng, 3)
    out = (a * 1.0 + a * 2.0).sum()
    out.backward()
    np.testing.assert_allclose(a.grad, 3.0, atol=1e-6)


def test_intermediate_grads_freed(rng):
    a = _param(rng, 3)
    mid = a * 2.0
    out = mid.sum()
    out.backward()
    assert mid.grad is None
    assert a.grad is not None
