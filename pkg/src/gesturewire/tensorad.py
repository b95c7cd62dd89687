"""Dense float64 tensors with reverse-mode automatic differentiation.

Small on purpose: just the primitives needed to express a conv tokenizer,
multi-head self-attention encoder blocks, and the training losses. Values
are numpy arrays (row major, 64-bit); every operation records its parents
and a gradient rule, and ``backward`` replays the graph once in reverse
topological order.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A value node in the computation graph.

    ``data`` is always a float64 ndarray. Non-leaf tensors keep their parent
    nodes and a gradient rule; calling :func:`backward` on a scalar loss
    fills ``grad`` for every reachable tensor with ``requires_grad=True``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self.grad = None
        self._parents = _parents if self.requires_grad else ()
        self._grad_fn = _grad_fn if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        """A copy of this value severed from the graph."""
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants wrap as non-grad leaves
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def grad_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def grad_fn(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, _parents=(a,), _grad_fn=lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    out_data = a.data**exponent

    def grad_fn(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return Tensor(out_data, _parents=(a,), _grad_fn=grad_fn)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return Tensor(out_data, _parents=(a,), _grad_fn=lambda g: (g * out_data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), _parents=(a,), _grad_fn=lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)
    return Tensor(out_data, _parents=(a,), _grad_fn=lambda g: (g / (2.0 * out_data),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def grad_fn(g):
        return (g * mask,)

    return Tensor(np.where(mask, a.data, 0.0), _parents=(a,), _grad_fn=grad_fn)


def gelu(a) -> Tensor:
    """Exact Gaussian-error-function GELU."""
    a = as_tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def grad_fn(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (phi + x * pdf),)

    return Tensor(x * phi, _parents=(a,), _grad_fn=grad_fn)


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); gradient passes only where a > floor."""
    a = as_tensor(a)
    mask = a.data > floor

    def grad_fn(g):
        return (g * mask,)

    return Tensor(np.where(mask, a.data, floor), _parents=(a,), _grad_fn=grad_fn)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor(out_data, _parents=(a,), _grad_fn=grad_fn)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out_data, _parents=(a,), _grad_fn=grad_fn)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inverse),)

    return Tensor(a.data.transpose(axes), _parents=(a,), _grad_fn=grad_fn)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.data.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def concatenate(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_data, _parents=tuple(tensors), _grad_fn=grad_fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product; leading batch dimensions broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul requires ndim >= 2 operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def grad_fn(g):
        da = g @ b.data.swapaxes(-1, -2)
        db = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(da, a.data.shape), _unbroadcast(db, b.data.shape)

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def conv1d_same(x, w, bias) -> Tensor:
    """Temporal cross-correlation with zero 'same' padding, stride 1.

    x: (C_in, T) or (B, C_in, T); w: (C_out, C_in, k); bias: (C_out,).
    Total padding k-1 splits as floor((k-1)/2) left, remainder right, so the
    output keeps length T.
    """
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d_same: bad ranks x={x.data.shape} w={w.data.shape}")
    batch, c_in, t_len = xd.shape
    c_out, w_cin, k = w.data.shape
    if w_cin != c_in:
        raise ShapeError(
            f"conv1d_same: channel mismatch x={x.data.shape} w={w.data.shape}"
        )
    if k > t_len:
        raise ConfigError(f"conv1d_same: kernel {k} longer than input {t_len}")
    left = (k - 1) // 2
    right = k - 1 - left

    xp = np.pad(xd, ((0, 0), (0, 0), (left, right)))
    # im2col: cols[b, t, c*k + j] = xp[b, c, t + j]
    view = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    cols = view.transpose(0, 2, 1, 3).reshape(batch, t_len, c_in * k)
    w2 = w.data.reshape(c_out, c_in * k)
    out = cols @ w2.T + bias.data  # (B, T, C_out)
    out = out.transpose(0, 2, 1)

    def grad_fn(g):
        gb = (g[None] if squeeze else g).transpose(0, 2, 1)  # (B, T, C_out)
        d_bias = gb.sum(axis=(0, 1))
        d_w = gb.reshape(-1, c_out).T @ cols.reshape(-1, c_in * k)
        d_cols = (gb @ w2).reshape(batch, t_len, c_in, k).transpose(0, 2, 1, 3)
        d_xp = np.zeros_like(xp)
        for j in range(k):
            d_xp[:, :, j : j + t_len] += d_cols[:, :, :, j]
        d_x = d_xp[:, :, left : left + t_len]
        if squeeze:
            d_x = d_x[0]
        return d_x, d_w.reshape(w.data.shape), d_bias

    out_final = out[0] if squeeze else out
    return Tensor(out_final, _parents=(x, w, bias), _grad_fn=grad_fn)


def softmax(x, axis=-1) -> Tensor:
    """Numerically stable softmax along ``axis``; slices sum to 1."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return Tensor(y, _parents=(x,), _grad_fn=grad_fn)


def layernorm(x, gain, shift, eps=1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    centered = sub(x, tmean(x, axis=-1, keepdims=True))
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    unit = div(centered, sqrt(add(var, eps)))
    return add(mul(unit, gain), shift)


def logsumexp(x, axis=-1, keepdims=False) -> Tensor:
    """log(sum(exp(x))) with a detached max shift for stability."""
    x = as_tensor(x)
    shift = x.data.max(axis=axis, keepdims=True)
    inner = log(tsum(exp(sub(x, shift)), axis=axis, keepdims=True))
    out = add(inner, shift)
    if not keepdims:
        out = reshape(out, np.squeeze(out.data, axis=axis).shape)
    return out


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root: Tensor):
    """Parents before children; iterative to spare the recursion limit."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable requires_grad tensor.

    Gradients for shared nodes accumulate additively; each node's rule runs
    exactly once, in reverse topological order.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def gradients(loss: Tensor, wrt) -> list:
    """Gradients of a scalar loss w.r.t. each tensor in ``wrt``.

    Leaves not reachable from the loss get zero gradients.
    """
    wrt = list(wrt)
    saved = [t.grad for t in wrt]
    for t in wrt:
        t.grad = None
    backward(loss)
    out = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in wrt]
    for t, s in zip(wrt, saved):
        t.grad = s
    return out
