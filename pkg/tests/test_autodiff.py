"""Gradient correctness of every tape primitive against finite differences."""

import numpy as np
import pytest

from divr import autodiff as ad
from divr.autodiff import Parameters, Tensor, backward


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * eps)
    return g


def check_op(op, shape, seed=0, positive=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    if positive:
        x = np.abs(x) + 0.5
    t = Tensor(x.copy(), requires_grad=True)
    loss = ad.tsum(op(t) * Tensor(rng.normal(size=op(Tensor(x)).data.shape)))
    # rebuild with the same weighting for the numeric pass
    w = loss._parents[0]._parents[1].data if loss._parents else None

    def f(arr):
        return float(np.sum(op(Tensor(arr)).data * w))

    backward(loss)
    np.testing.assert_allclose(t.grad, numeric_grad(f, x.copy()), rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize(
    "op",
    [
        ad.relu,
        ad.gelu,
        ad.absolute,
        ad.exp,
        lambda x: ad.log(x),
        ad.layer_norm_core,
        lambda x: ad.softmax(x, axis=-1),
        lambda x: ad.reshape(x, (6, 2)),
        lambda x: ad.transpose(x, (1, 0)),
        lambda x: ad.tsum(x, axis=0),
        lambda x: ad.tmean(x, axis=1, keepdims=True),
        lambda x: x[1:3],
        lambda x: ad.tile_rows(ad.reshape(ad.tmean(x, axis=0), (-1,)), 5),
    ],
)
def test_unary_ops(op):
    check_op(op, (3, 4), positive=True)


def test_amax_grad():
    check_op(lambda x: ad.amax(x, axis=0), (5, 3), seed=2)


def test_masked_max_grad():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5, 3))
    mask = rng.random((4, 5)) > 0.3
    mask[:, 0] = True  # every row keeps one valid entry
    w = rng.normal(size=(4, 3))
    t = Tensor(x.copy(), requires_grad=True)
    loss = ad.tsum(ad.masked_max(t, mask) * Tensor(w))
    backward(loss)

    def f(arr):
        return float(np.sum(ad.masked_max(Tensor(arr), mask).data * w))

    np.testing.assert_allclose(t.grad, numeric_grad(f, x.copy()), rtol=1e-6, atol=1e-8)


def test_matmul_broadcast_grad():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(4, 5))
    ta = Tensor(a.copy(), requires_grad=True)
    tb = Tensor(b.copy(), requires_grad=True)
    w = rng.normal(size=(2, 3, 5))
    loss = ad.tsum((ta @ tb) * Tensor(w))
    backward(loss)

    def fa(arr):
        return float(np.sum((arr @ b) * w))

    def fb(arr):
        return float(np.sum((a @ arr) * w))

    np.testing.assert_allclose(ta.grad, numeric_grad(fa, a.copy()), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(tb.grad, numeric_grad(fb, b.copy()), rtol=1e-6, atol=1e-8)


def test_add_mul_broadcast_grad():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,))
    ta = Tensor(a.copy(), requires_grad=True)
    tb = Tensor(b.copy(), requires_grad=True)
    w = rng.normal(size=(3, 4))
    loss = ad.tsum((ta * tb + tb) * Tensor(w))
    backward(loss)
    np.testing.assert_allclose(tb.grad, (w * a).sum(axis=0) + w.sum(axis=0))
    np.testing.assert_allclose(ta.grad, w * b)


def test_concat_take_grad():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(4, 3))
    ta = Tensor(a.copy(), requires_grad=True)
    tb = Tensor(b.copy(), requires_grad=True)
    idx = np.array([0, 2, 2, 5])
    w = rng.normal(size=(4, 3))
    loss = ad.tsum(ad.concat([ta, tb], axis=0)[idx] * Tensor(w))
    backward(loss)

    def fa(arr):
        return float(np.sum(np.concatenate([arr, b])[idx] * w))

    def fb(arr):
        return float(np.sum(np.concatenate([a, arr])[idx] * w))

    np.testing.assert_allclose(ta.grad, numeric_grad(fa, a.copy()), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(tb.grad, numeric_grad(fb, b.copy()), rtol=1e-6, atol=1e-8)


def test_diamond_graph_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * 3.0
    loss = ad.tsum(y * y)  # d/dx (3x)^2 = 18x = 36
    backward(loss)
    np.testing.assert_allclose(x.grad, [36.0])


def test_no_grad_blocks_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert y._vjp is None and not y.requires_grad


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        backward(x * 2.0)


def test_parameters_roundtrip():
    p = Parameters()
    p.add("a.W", np.arange(6.0).reshape(2, 3))
    p.add("a.b", np.zeros(3))
    with pytest.raises(ValueError):
        p.add("a.W", np.zeros(1))
    state = p.state()
    p["a.W"].data[:] = 0
    p.load_state(state)
    np.testing.assert_array_equal(p["a.W"].data, np.arange(6.0).reshape(2, 3))
    with pytest.raises(ValueError):
        p.load_state({"a.W": np.zeros((2, 3))})
    assert p.n_scalars() == 9


def test_gradient_check_utility_on_quadratic():
    p = Parameters()
    p.add("w", np.array([1.5, -2.0]))

    def loss_fn():
        return ad.tsum(p["w"] * p["w"])

    errs = ad.gradient_check(loss_fn, p, eps=1e-5)
    assert max(errs.values()) < 1e-6
