"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a row-major numpy array plus an optional gradient buffer.
Operations record themselves on an implicit tape: each result remembers
its input tensors and a backward closure. ``Tensor.backward()`` on a
scalar walks the tape once in reverse topological order, accumulating
gradients additively across fan-out. No graph optimization, no fusion;
the design optimizes for debuggability at desk scale.

Only tensors with ``requires_grad=True`` ever allocate grad storage.
The op set is exactly what the encoder needs: matmul (with stacked
leading dimensions), broadcasting add/mul, transpose/reshape, softmax,
layer_norm, fixed GELU/ReLU, the trainable rational activation,
embedding lookup, token selection, sum/mean, and masked cross-entropy.

A tape is single-threaded; independent tapes may run concurrently.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError, UndefinedLossError
from .rational import RationalCoefficients, rational_batch_grads

__all__ = [
    "Tensor",
    "no_grad",
    "add",
    "sub",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "tsum",
    "tmean",
    "softmax",
    "layer_norm",
    "gelu_fixed",
    "relu_fixed",
    "rational_apply",
    "embedding_lookup",
    "token_at",
    "cross_entropy",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_inputs", "_backward", "_op", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=""):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind not in "fiu":
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._inputs = ()
        self._backward = None
        self._op = ""
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        g = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{g}, op={self._op!r})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate .grad on every requires_grad tensor reachable from this scalar."""
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._inputs:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the free functions carry the real implementations.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None and np.asarray(x).dtype.kind == "f" else None
    if isinstance(x, (int, float)) and like is not None:
        dtype = like.data.dtype
    return Tensor(np.asarray(x), dtype=dtype)


def _make(data, inputs, backward, op):
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._inputs = tuple(inputs)
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from e

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    return add(a, mul(b, -1.0))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from e

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul requires tensors with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape))

    return _make(data, (a, b), backward, "matmul")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = np.transpose(a.data, axes)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inv))

    return _make(data, (a,), backward, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from e

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(old))

    return _make(data, (a,), backward, "reshape")


def tsum(a: Tensor, axis=None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _make(data, (a,), backward, "sum")


def tmean(a: Tensor) -> Tensor:
    return mul(tsum(a), 1.0 / a.data.size)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate(data * (g - inner))

    return _make(data, (a,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    h = x.shape[-1]
    if gamma.shape != (h,) or beta.shape != (h,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({h},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    data = gamma.data * x_hat + beta.data

    def backward(g):
        batch_axes = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gamma._accumulate((g * x_hat).sum(axis=batch_axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=batch_axes))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * x_hat).mean(axis=-1, keepdims=True)
            x._accumulate(inv_std * (gx - m1 - x_hat * m2))

    return _make(data, (x, gamma, beta), backward, "layer_norm")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_reference(x):
    """Exact GELU, 0.5*x*(1+erf(x/sqrt(2))); works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_fixed(a: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    data = (a.data * cdf).astype(a.data.dtype, copy=False)

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
            a._accumulate(g * (cdf + a.data * pdf))

    return _make(data, (a,), backward, "gelu")


def relu_fixed(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _make(data, (a,), backward, "relu")


def rational_apply(x: Tensor, coeff: Tensor, m: int, n: int) -> Tensor:
    """Elementwise safe rational activation with trainable coefficients.

    ``coeff`` is the flat [a_0..a_m, b_1..b_n] parameter tensor; gradients
    flow to both the inputs and (when trainable) the coefficients.
    """
    if coeff.shape != (m + 1 + n,):
        raise ShapeError(f"rational_apply: coeff must have shape ({m + 1 + n},)")
    coeffs = RationalCoefficients(tuple(coeff.data[: m + 1].tolist()), tuple(coeff.data[m + 1 :].tolist()))
    value, d_input, d_num, d_den = rational_batch_grads(x.data, coeffs)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * d_input)
        if coeff.requires_grad:
            gc = np.empty(m + 1 + n, dtype=coeff.data.dtype)
            for j in range(m + 1):
                gc[j] = float((g * d_num[j]).sum())
            for k in range(n):
                gc[m + 1 + k] = float((g * d_den[k]).sum())
            coeff._accumulate(gc)

    return _make(value.astype(x.data.dtype, copy=False), (x, coeff), backward, "rational")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids if not isinstance(ids, Tensor) else ids.data)
    if ids.dtype.kind not in "iu":
        raise ShapeError("embedding_lookup: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: id out of range [0, {table.shape[0]})")
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            table._accumulate(acc)

    return _make(data, (table,), backward, "embedding")


def token_at(x: Tensor, index: int) -> Tensor:
    """Select one sequence position: (B, L, H) -> (B, H)."""
    if x.data.ndim != 3:
        raise ShapeError("token_at expects a (batch, seq, hidden) tensor")
    data = x.data[:, index, :].copy()

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, index, :] = g
            x._accumulate(full)

    return _make(data, (x,), backward, "token_at")


def cross_entropy(logits: Tensor, targets, ignore_index: int = -1) -> Tensor:
    """Mean negative log-likelihood over positions whose target is not ignored.

    ``logits`` is (N, V); ``targets`` is (N,) int64 with ``ignore_index``
    marking positions that contribute nothing to the loss.
    """
    targets = np.asarray(targets if not isinstance(targets, Tensor) else targets.data)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: expected (N, V) logits with (N,) targets, got {logits.shape} / {targets.shape}")
    valid = targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise UndefinedLossError("every target is the ignore index; loss undefined")
    if targets[valid].min() < 0 or targets[valid].max() >= logits.shape[1]:
        raise ShapeError("cross_entropy: target id out of range")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    rows = np.nonzero(valid)[0]
    nll = -log_probs[rows, targets[rows]].sum() / count
    data = np.asarray(nll, dtype=logits.data.dtype)

    def backward(g):
        if logits.requires_grad:
            grad = np.exp(log_probs)
            grad[rows, targets[rows]] -= 1.0
            grad[~valid] = 0.0
            logits._accumulate(grad * (float(g) / count))

    return _make(data, (logits,), backward, "cross_entropy")
