"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every network in this package runs on the `Tensor` type defined here. The
computation record is a tape rebuilt on every forward pass: each tensor
produced by an op stores its parent tensors and a closure that routes the
output gradient back to them. `backward()` replays those closures in exact
reverse creation order, which is a valid topological order because parents
are always created before their children.

Only float64 is supported; gradient checks at 1e-4 relative tolerance are
not reliable in float32.
"""

import itertools
from contextlib import contextmanager

import numpy as np

_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (rollouts, evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    """Dense multi-dimensional float64 array on the differentiation tape.

    Attributes:
        data: numpy float64 array of the declared shape.
        requires_grad: whether gradients should be accumulated here.
        grad: numpy array of the same shape, or None until backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "_id", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None, _op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._id = next(_ids)
        self._parents = _parents
        self._backward_fn = _backward_fn
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        """Copy of this tensor cut off from the tape."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # Operator sugar; constants are promoted to leaf tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn, op):
    req = _grad_enabled and any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data, requires_grad=False, _op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward_fn=backward_fn, _op=op)


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        tensor.grad += grad


def backward(loss):
    """Backpropagate from a scalar loss through the recorded tape.

    All reachable tensors with requires_grad get their .grad populated
    (accumulated, if already set). Traversal is in exact reverse creation
    order, which is the reverse of a topological order by construction.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in nodes:
            continue
        nodes[t._id] = t
        stack.extend(t._parents)
    grads = {loss._id: np.ones_like(loss.data)}
    for node_id in sorted(nodes, reverse=True):
        t = nodes[node_id]
        g = grads.pop(node_id, None)
        if g is None:
            continue
        # The gradient for this node is final: every consumer has a larger
        # id and was already processed.
        _accumulate(t, g)
        if t._backward_fn is None:
            continue
        for parent, pg in zip(t._parents, t._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in grads:
                grads[parent._id] += pg
            else:
                grads[parent._id] = np.array(pg, dtype=np.float64, copy=True)


# ---------------------------------------------------------------------------
# Broadcasting helpers (numpy-style, trailing-dimension alignment only)

def _broadcast_shape(sa, sb):
    if sa == sb:
        return sa
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ValueError(f"shapes {tuple(sa)} and {tuple(sb)} are not broadcast-compatible") from None


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Binary elementwise ops

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bwd, "add")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bwd, "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _make(ad * bd, (a, b), bwd, "mul")


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g / bd, a.shape), _unbroadcast(-g * ad / (bd * bd), b.shape)

    return _make(ad / bd, (a, b), bwd, "div")


# ---------------------------------------------------------------------------
# Unary elementwise ops

def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    if np.any(a.data <= 0.0):
        raise ValueError("log requires strictly positive inputs")
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    mask = a.data > 0.0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def square(a):
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def softplus(a):
    """log(1 + exp(x)), computed without overflow; gradient is sigmoid(x)."""
    ad = a.data
    out = np.maximum(ad, 0.0) + np.log1p(np.exp(-np.abs(ad)))
    sig = 1.0 / (1.0 + np.exp(-ad))
    return _make(out, (a,), lambda g: (g * sig,), "softplus")


def sqrt(a):
    if np.any(a.data < 0.0):
        raise ValueError("sqrt requires non-negative inputs")
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


_UNARY = {"neg": neg, "exp": exp, "log": log, "tanh": tanh, "sigmoid": sigmoid,
          "relu": relu, "square": square}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_kind, a, b=None):
    """Dispatch an elementwise op by name.

    Binary kinds (add, sub, mul) require broadcast-compatible shapes and a
    second operand; unary kinds reject one.
    """
    if op_kind in _BINARY:
        if b is None:
            raise ValueError(f"{op_kind} is binary and needs two operands")
        return _BINARY[op_kind](a, b)
    if op_kind in _UNARY:
        if b is not None:
            raise ValueError(f"{op_kind} is unary")
        return _UNARY[op_kind](a)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


def custom_op(data, parents, backward_fn, name):
    """Build a tensor from a fused forward result and its gradient closure.

    backward_fn(g) must return one gradient array (or None) per parent.
    """
    return _make(data, tuple(parents), backward_fn, name)


# ---------------------------------------------------------------------------
# Matrix multiply

def affine(x, w, b):
    """Fused x @ w + b for x [batch, in], w [in, out], b [out]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"affine shapes mismatch: {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data

    def bwd(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _make(xd @ wd + b.data, (x, w, b), bwd, "affine")


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), bwd, "matmul")


# ---------------------------------------------------------------------------
# Reductions

def reduce(op_kind, a, axis=None, keepdims=False):
    if op_kind == "sum":
        return sum_(a, axis, keepdims)
    if op_kind == "mean":
        return mean(a, axis, keepdims)
    if op_kind == "max":
        return max_(a, axis, keepdims)
    raise ValueError(f"unknown reduce op {op_kind!r}")


def _check_axis(a, axis):
    if axis is None:
        return
    for ax in np.atleast_1d(axis):
        if not -a.ndim <= ax < a.ndim:
            raise ValueError(f"axis {axis} invalid for shape {a.shape}")


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False):
    _check_axis(a, axis)
    shape = a.shape

    def bwd(g):
        return (_expand_reduced(g, shape, axis, keepdims).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd, "sum")


def mean(a, axis=None, keepdims=False):
    _check_axis(a, axis)
    shape = a.shape
    n = a.size if axis is None else np.prod([shape[ax] for ax in np.atleast_1d(axis)])

    def bwd(g):
        return (_expand_reduced(g, shape, axis, keepdims) / n,)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd, "mean")


def max_(a, axis=None, keepdims=False):
    _check_axis(a, axis)
    out = a.data.max(axis=axis, keepdims=keepdims)
    full = a.data.max(axis=axis, keepdims=True) if axis is not None else a.data.max()
    mask = (a.data == full).astype(np.float64)
    mask /= mask.sum(axis=axis, keepdims=True) if axis is not None else mask.sum()
    shape = a.shape

    def bwd(g):
        return (_expand_reduced(g, shape, axis, keepdims) * mask,)

    return _make(out, (a,), bwd, "max")


# ---------------------------------------------------------------------------
# Shape ops

def reshape(a, shape):
    old = a.shape

    def bwd(g):
        return (g.reshape(old),)

    return _make(a.data.reshape(shape), (a,), bwd, "reshape")


def transpose(a, axes=None):
    def bwd(g):
        return (np.transpose(g) if axes is None else np.transpose(g, np.argsort(axes)),)

    return _make(np.transpose(a.data, axes), (a,), bwd, "transpose")


def broadcast_to(a, shape):
    """Explicit broadcast; gradient sums over the expanded axes."""
    old = a.shape
    out = np.broadcast_to(a.data, shape)

    def bwd(g):
        return (_unbroadcast(g, old),)

    return _make(out.copy(), (a,), bwd, "broadcast_to")


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of zero tensors")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis % len(base) and other[i] != base[i] for i in range(len(base))
        ):
            raise ValueError(f"concat shapes incompatible along axis {axis}: "
                             f"{[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.array_split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd, "concat")


def narrow(a, axis, start, length):
    """Contiguous slice of `length` entries along `axis`, starting at `start`."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    shape = a.shape

    def bwd(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _make(a.data[idx].copy(), (a,), bwd, "narrow")


# ---------------------------------------------------------------------------
# Softmax

def softmax(a, axis):
    if np.any(np.isnan(a.data)):
        raise ValueError("softmax input contains NaN")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bwd, "softmax")


def detach(a):
    return a.detach()
