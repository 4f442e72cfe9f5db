"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray together with the bookkeeping needed to
run backpropagation: the parent tensors it was computed from and a closure
that routes an incoming gradient to those parents.  Graphs are array-valued,
so a forward pass through a 256-unit layer adds a handful of nodes rather
than tens of thousands, and the heavy lifting stays inside BLAS.

Only the operations required by the training losses are implemented.  All
data is kept in float64; inputs of other dtypes are converted on entry.

Subgradient conventions at kinks:
  * relu: derivative 0 at x == 0
  * clip: derivative 0 outside the open interval, 1 inside (boundary counts
    as inside)
  * minimum/maximum: gradient routed to the selected branch; ties go to the
    first argument
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Node in the computation graph.

    ``requires_grad`` marks leaves that accumulate into ``.grad``; interior
    nodes inherit it from their parents so constant subgraphs are never
    recorded.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        """Constant view of this tensor's values; no history is kept."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        self is seeded with ones, so call this on scalar losses.
        """
        order = _topo_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                # leaf: accumulate
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("divide by a constant or use exp(-log(x)) style rewrites")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)


def _topo_order(root: Tensor):
    """Reverse topological order, iteratively (graphs can be deep)."""
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return list(reversed(order))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches the original shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ----------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(data, (a, b), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0.0
    data = np.where(mask, x.data, 0.0)

    def backward(g):
        return (g * mask,)

    return _make(data, (x,), backward)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return _make(t, (x,), backward)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    e = np.exp(x.data)

    def backward(g):
        return (g * e,)

    return _make(e, (x,), backward)


def log(x) -> Tensor:
    x = _as_tensor(x)
    data = np.log(x.data)

    def backward(g):
        return (g / x.data,)

    return _make(data, (x,), backward)


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed stably; derivative is sigmoid(x)."""
    x = _as_tensor(x)
    data = np.logaddexp(0.0, x.data)

    def backward(g):
        sig = 1.0 / (1.0 + np.exp(-x.data))
        return (g * sig,)

    return _make(data, (x,), backward)


def square(x) -> Tensor:
    x = _as_tensor(x)
    data = x.data * x.data

    def backward(g):
        return (2.0 * g * x.data,)

    return _make(data, (x,), backward)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _make(data, (x,), backward)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def maximum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        return (_unbroadcast(g * take_a, a.data.shape),
                _unbroadcast(g * ~take_a, b.data.shape))

    return _make(data, (a, b), backward)


def minimum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        return (_unbroadcast(g * take_a, a.data.shape),
                _unbroadcast(g * ~take_a, b.data.shape))

    return _make(data, (a, b), backward)


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    x = _as_tensor(x)
    data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        return (g * inside,)

    return _make(data, (x,), backward)


def concat(parts, axis: int = 1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(parts), backward)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.data.shape),)

    return _make(data, (x,), backward)


def take_columns(x, start: int, stop: int) -> Tensor:
    """Contiguous column slice x[:, start:stop] of a 2-d tensor."""
    x = _as_tensor(x)
    data = x.data[:, start:stop]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _make(data, (x,), backward)
