"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every primitive returns a new :class:`Tensor` that remembers its parents and
a closure propagating the upstream gradient to them.  :func:`backward` orders
the recorded graph into a :class:`Tape` and replays it in reverse.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __truediv__ = lambda self, other: mul(self, 1.0 / other if not isinstance(other, Tensor) else reciprocal(other))


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    out.op = op
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


def _accumulate(t, g):
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: _accumulate(a, -g), "neg")


def reciprocal(a):
    a = as_tensor(a)
    out = 1.0 / a.data
    return _result(out, (a,), lambda g: _accumulate(a, -g * out * out), "reciprocal")


def square(a):
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: _accumulate(a, 2.0 * a.data * g), "square")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: _accumulate(a, g * out), "exp")


def log(a):
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data), "log")


def abs(a):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    return _result(np.abs(a.data), (a,), lambda g: _accumulate(a, g * np.sign(a.data)), "abs")


def sigmoid(a):
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _result(out, (a,), lambda g: _accumulate(a, g * out * (1.0 - out)), "sigmoid")


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: _accumulate(a, g * mask), "relu")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: _accumulate(a, g * (1.0 - out * out)), "tanh")


def softplus(a):
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _result(out, (a,), lambda g: _accumulate(a, g * _stable_sigmoid(a.data)), "softplus")


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(a, out * (g - dot))

    return _result(out, (a,), backward, "softmax")


# ------------------------------------------------------------------- linear

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible operands {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def spmm(matrix, b):
    """Multiply a constant (dense or scipy.sparse) matrix by a tensor.

    Used for neighbourhood aggregation; the matrix itself never receives a
    gradient.
    """
    b = as_tensor(b)
    if matrix.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm: incompatible operands {matrix.shape} @ {b.shape}")
    mt = matrix.T
    return _result(np.asarray(matrix @ b.data), (b,), lambda g: _accumulate(b, np.asarray(mt @ g)), "spmm")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].data.ndim
    ax = axis % ref
    for t in tensors[1:]:
        other = [d for i, d in enumerate(t.shape) if i != ax]
        mine = [d for i, d in enumerate(tensors[0].shape) if i != ax]
        if t.data.ndim != ref or other != mine:
            raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward, "concat")


def slice_(a, index):
    """``a[index]`` for basic or integer-array indexing along the leading axes."""
    a = as_tensor(a)
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _result(np.array(out, dtype=np.float64), (a,), backward, "slice")


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _result(out, (a,), backward, "reduce_sum")


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def gaussian_sample(mu, logvar, noise):
    """Reparameterised draw ``mu + exp(logvar / 2) * noise``.

    ``noise`` is treated as a constant: no gradient is propagated into it.
    """
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    noise = np.asarray(noise.data if isinstance(noise, Tensor) else noise, dtype=np.float64)
    if mu.shape != logvar.shape or noise.shape != mu.shape:
        raise ShapeError(f"gaussian_sample: mu {mu.shape}, logvar {logvar.shape}, noise {noise.shape}")
    return add(mu, mul(exp(mul(logvar, 0.5)), noise))


# ----------------------------------------------------------------- backward

class Tape:
    """Topologically ordered record of the operations behind one output."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def record(cls, output):
        order, seen = [], set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def replay(self, seed_grad):
        out = self.nodes[-1]
        out.grad = seed_grad
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior buffers are not needed after propagation
                if node._parents:
                    node.grad = None


def backward(loss):
    """Populate ``.grad`` of every leaf with ``requires_grad`` reachable from ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return Tape([loss])
    tape = Tape.record(loss)
    tape.replay(np.ones_like(loss.data))
    return tape
