"""Reverse-mode differentiation over a small, fixed operator set.

Every op takes ``Var`` (or plain arrays, treated as constants) and returns a
new ``Var`` that remembers its parents and a closure mapping the upstream
gradient to parent gradients. ``backward`` walks the recorded graph once in
reverse topological order.

Values are computed in float64. Constants never receive gradients, and
``stop_gradient`` cuts a subgraph out of the backward pass while keeping its
forward value.
"""

import numpy as np

from ..errors import GraphError
from .. import kernels

__all__ = [
    "Var", "as_var", "backward", "grad_of", "stop_gradient",
    "add", "sub", "mul", "scale", "matmul", "matmul_t", "spmm", "sigmoid",
    "take_rows", "concat_rows", "slice_rows", "row_dot", "l2_normalize",
    "diag_cross_entropy", "neg_log_sigmoid", "mean", "total", "sum_squares",
    "mse", "weighted_sum",
]


class Var:
    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def _node(value, parents, backward_fn):
    out = Var(value)
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def stop_gradient(x):
    return Var(as_var(x).value)


# --- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = as_var(a), as_var(b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_var(a), as_var(b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape),
                            _unbroadcast(g * a.value, b.shape)))


def scale(a, c):
    a = as_var(a)
    c = float(c)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def sigmoid(a):
    a = as_var(a)
    y = _sigmoid(a.value)
    return _node(y, (a,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- linear algebra --------------------------------------------------------

def matmul(a, b):
    a, b = as_var(a), as_var(b)
    return _node(a.value @ b.value, (a, b),
                 lambda g: (g @ b.value.T, a.value.T @ g))


def matmul_t(a, b):
    """``a @ b.T``."""
    a, b = as_var(a), as_var(b)
    return _node(a.value @ b.value.T, (a, b),
                 lambda g: (g @ b.value, g.T @ a.value))


def spmm(graph, x):
    """Constant sparse matrix times a dense ``Var``."""
    x = as_var(x)
    value = graph.matmul(x.value)
    return _node(value, (x,), lambda g: (graph.transpose().matmul(g),))


# --- row plumbing ----------------------------------------------------------

def take_rows(a, idx):
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return (full,)

    return _node(a.value[idx], (a,), back)


def concat_rows(parts):
    parts = [as_var(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def back(g):
        return tuple(g[bounds[j]:bounds[j + 1]] for j in range(len(parts)))

    return _node(np.concatenate([p.value for p in parts], axis=0), parts, back)


def slice_rows(a, start, stop):
    a = as_var(a)

    def back(g):
        full = np.zeros_like(a.value)
        full[start:stop] = g
        return (full,)

    return _node(a.value[start:stop], (a,), back)


def row_dot(a, b):
    a, b = as_var(a), as_var(b)
    return _node(np.einsum("ij,ij->i", a.value, b.value), (a, b),
                 lambda g: (g[:, None] * b.value, g[:, None] * a.value))


def l2_normalize(a, eps=1e-12):
    """Row-wise unit normalization; rows with norm below ``eps`` map to zero."""
    a = as_var(a)
    norm = np.sqrt(np.einsum("ij,ij->i", a.value, a.value))
    live = norm > eps
    safe = np.where(live, norm, 1.0)
    y = np.where(live[:, None], a.value / safe[:, None], 0.0)

    def back(g):
        proj = np.einsum("ij,ij->i", g, y)
        return (np.where(live[:, None], (g - y * proj[:, None]) / safe[:, None], 0.0),)

    return _node(y, (a,), back)


# --- reductions and losses -------------------------------------------------

def diag_cross_entropy(logits):
    """Mean over rows of softmax cross-entropy with target = the diagonal."""
    logits = as_var(logits)
    z = logits.value
    n = z.shape[0]
    shift = z.max(axis=1, keepdims=True)
    ez = np.exp(z - shift)
    denom = ez.sum(axis=1, keepdims=True)
    lse = np.log(denom[:, 0]) + shift[:, 0]
    value = float(np.mean(lse - np.diagonal(z)))

    def back(g):
        soft = ez / denom
        soft[np.arange(n), np.arange(n)] -= 1.0
        return (g * soft / n,)

    return _node(value, (logits,), back)


def neg_log_sigmoid(x, clamp=1e-12):
    """Elementwise ``-log(max(sigmoid(x), clamp))``."""
    x = as_var(x)
    sig = _sigmoid(x.value)
    clamped = sig < clamp
    value = np.where(clamped, -np.log(clamp), np.logaddexp(0.0, -x.value))
    return _node(value, (x,), lambda g: (np.where(clamped, 0.0, -g * (1.0 - sig)),))


def mean(a):
    a = as_var(a)
    size = a.value.size
    return _node(float(a.value.mean()), (a,),
                 lambda g: (np.full(a.shape, g / size),))


def total(a):
    a = as_var(a)
    return _node(float(a.value.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def sum_squares(a):
    a = as_var(a)
    return _node(float(np.sum(a.value * a.value)), (a,), lambda g: (2.0 * g * a.value,))


def mse(a, b):
    a, b = as_var(a), as_var(b)
    diff = a.value - b.value
    size = diff.size
    return _node(float(np.mean(diff * diff)), (a, b),
                 lambda g: (2.0 * g * diff / size, -2.0 * g * diff / size))


def weighted_sum(terms, weights):
    """``sum(w * t)`` over scalar Vars, skipping zero weights entirely."""
    out = Var(0.0)
    for t, w in zip(terms, weights):
        if w != 0.0:
            out = add(out, scale(t, w))
    return out


# --- backward pass ---------------------------------------------------------

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every leaf that ``loss`` depends on.

    Leaf gradients accumulate across calls; intermediate gradients are
    reset each call.
    """
    if loss.value.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    pending = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg
    return order


def grad_of(loss, leaf):
    """Gradient of ``loss`` w.r.t. one leaf; the leaf must be on the graph."""
    order = _topo_order(loss)
    if not any(n is leaf for n in order):
        raise GraphError(f"{leaf!r} is not on the graph recorded for this loss")
    leaf.grad = None
    backward(loss)
    return leaf.grad
