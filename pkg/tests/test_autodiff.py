"""Gradient checks for the tape.

Central finite differences are the oracle: for every primitive we compare
the backward pass against (f(x+h) - f(x-h)) / 2h elementwise.  h = 1e-6 on
float64 gives roughly 1e-10 truncation error, far below the 1e-6 assertion
threshold used here.
"""

import numpy as np
import pytest

from msacl import autodiff as ad


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def check_unary(op, x, tol=1e-6):
    xt = ad.Tensor(x.copy(), requires_grad=True)
    loss = ad.tsum(op(xt))
    loss.backward()
    ref = fd_grad(lambda v: op(ad.Tensor(v)).data.sum(), x.copy())
    assert np.max(np.abs(xt.grad - ref)) < tol, op


rng = np.random.default_rng(7)


def test_elementwise_primitives():
    x = rng.standard_normal((4, 5))
    check_unary(ad.tanh, x)
    check_unary(ad.exp, x)
    check_unary(ad.softplus, x)
    check_unary(ad.square, x)
    check_unary(lambda t: ad.log(t), np.abs(x) + 0.5)
    # keep relu test points away from the kink
    xr = x.copy()
    xr[np.abs(xr) < 1e-3] = 0.5
    check_unary(ad.relu, xr)


def test_relu_subgradient_zero_at_kink():
    x = ad.Tensor(np.array([0.0, -1.0, 2.0]), requires_grad=True)
    ad.tsum(ad.relu(x)).backward()
    assert np.array_equal(x.grad, [0.0, 0.0, 1.0])


def test_clip_grad_zero_outside_range():
    x = ad.Tensor(np.array([-2.0, 0.3, 5.0]), requires_grad=True)
    ad.tsum(ad.clip(x, -1.0, 1.0)).backward()
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_min_max_route_to_selected_branch():
    a = ad.Tensor(np.array([1.0, 5.0]), requires_grad=True)
    b = ad.Tensor(np.array([3.0, 2.0]), requires_grad=True)
    ad.tsum(ad.minimum(a, b)).backward()
    assert np.array_equal(a.grad, [1.0, 0.0])
    assert np.array_equal(b.grad, [0.0, 1.0])
    a.zero_grad(), b.zero_grad()
    ad.tsum(ad.maximum(a, b)).backward()
    assert np.array_equal(a.grad, [0.0, 1.0])
    assert np.array_equal(b.grad, [1.0, 0.0])


def test_matmul_affine_gradients():
    # scalar loss sum((xW + b)^2): dW and db against finite differences
    x = rng.standard_normal((3, 4))
    W = rng.standard_normal((4, 2))
    b = rng.standard_normal(2)

    def loss_of(Wv, bv):
        return np.sum((x @ Wv + bv) ** 2)

    Wt = ad.Tensor(W.copy(), requires_grad=True)
    bt = ad.Tensor(b.copy(), requires_grad=True)
    out = ad.add(ad.matmul(ad.Tensor(x), Wt), bt)
    ad.tsum(ad.square(out)).backward()
    assert np.max(np.abs(Wt.grad - fd_grad(lambda v: loss_of(v, b), W.copy()))) < 1e-5
    assert np.max(np.abs(bt.grad - fd_grad(lambda v: loss_of(W, v), b.copy()))) < 1e-5


def test_quadratic_form_closed_form():
    # L = 0.5 * ||W x||^2  =>  dL/dW = (W x) x^T
    W = rng.standard_normal((3, 3))
    x = rng.standard_normal((3, 1))
    Wt = ad.Tensor(W.copy(), requires_grad=True)
    y = ad.matmul(Wt, ad.Tensor(x))
    (ad.tsum(ad.square(y)) * 0.5).backward()
    assert np.allclose(Wt.grad, (W @ x) @ x.T, atol=1e-12)


def test_broadcasting_unbroadcast():
    # (3,4) + (4,) and (3,4) * scalar both reduce grads correctly
    a = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal(4), requires_grad=True)
    ad.tsum(ad.mul(ad.add(a, b), 2.0)).backward()
    assert a.grad.shape == (3, 4) and np.allclose(a.grad, 2.0)
    assert b.grad.shape == (4,) and np.allclose(b.grad, 6.0)


def test_sum_mean_axis():
    x = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    ad.tsum(ad.tmean(x, axis=1)).backward()
    assert np.allclose(x.grad, 1.0 / 3.0)


def test_concat_reshape_roundtrip():
    a = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    merged = ad.concat([a, b], axis=1)
    flat = ad.reshape(merged, (10,))
    ad.tsum(ad.mul(flat, np.arange(10.0))).backward()
    expect = np.arange(10.0).reshape(2, 5)
    assert np.array_equal(a.grad, expect[:, :3])
    assert np.array_equal(b.grad, expect[:, 3:])


def test_grad_accumulates_on_reuse():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    y = ad.add(ad.square(x), ad.mul(x, 3.0))  # x^2 + 3x, dy/dx = 2x + 3
    y.backward()
    assert np.allclose(x.grad, 7.0)


def test_backward_twice_accumulates():
    x = ad.Tensor(np.array([1.0]), requires_grad=True)
    ad.square(x).backward()
    ad.square(x).backward()
    assert np.allclose(x.grad, 4.0)
    x.zero_grad()
    assert np.allclose(x.grad, 0.0)


def test_constant_subgraphs_not_recorded():
    c = ad.Tensor(np.ones(3))
    out = ad.add(ad.mul(c, 2.0), 1.0)
    assert out._parents == () and not out.requires_grad


def test_composite_chain_matches_fd():
    # deep-ish chain mixing most primitives
    x0 = rng.standard_normal((5, 4)) * 0.7

    def chain(x):
        h = ad.tanh(ad.add(ad.mul(x, 1.3), 0.1))
        h = ad.softplus(ad.add(h, ad.exp(ad.mul(x, -0.5))))
        h = ad.minimum(h, ad.square(x))
        h = ad.clip(h, -0.8, 0.8)
        return ad.tmean(h)

    xt = ad.Tensor(x0.copy(), requires_grad=True)
    chain(xt).backward()
    ref = fd_grad(lambda v: float(chain(ad.Tensor(v)).data), x0.copy())
    assert np.max(np.abs(xt.grad - ref)) < 1e-6


def test_division_by_tensor_rejected():
    a = ad.Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(TypeError):
        a / a


def test_take_columns_forward_and_grad():
    x0 = rng.standard_normal((4, 5))
    xt = ad.Tensor(x0.copy(), requires_grad=True)
    y = ad.take_columns(xt, 1, 4)
    assert np.array_equal(y.data, x0[:, 1:4])
    w = rng.standard_normal((4, 3))
    ad.tsum(ad.mul(y, w)).backward()
    expect = np.zeros_like(x0)
    expect[:, 1:4] = w
    assert np.allclose(xt.grad, expect, atol=1e-15)
    ref = fd_grad(lambda v: float(ad.tsum(ad.mul(ad.take_columns(
        ad.Tensor(v), 1, 4), w)).data), x0.copy())
    assert np.max(np.abs(xt.grad - ref)) < 1e-6
