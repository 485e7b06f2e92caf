"""Reverse-mode differentiable tensor arithmetic on float64 numpy arrays.

The op set is deliberately small: elementwise arithmetic, matmul, a few
smooth nonlinearities, reductions, softmax, shape ops, and an extension
point for composite ops with hand-derived VJPs. Everything runs at 64-bit
and is single-threaded deterministic. Gradients are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class NumericError(RuntimeError):
    """Raised when a non-finite value is produced by the op graph."""


class Tape:
    """Ordered record of ops for one differentiated evaluation."""

    __slots__ = ("records",)

    def __init__(self):
        # each record: (out_tensor, ((in_tensor, vjp_fn), ...), op_name)
        self.records = []


_ACTIVE_TAPE: Tape | None = None


@contextmanager
def recording():
    """Activate a fresh tape for the duration of the block."""
    global _ACTIVE_TAPE
    prev = _ACTIVE_TAPE
    tape = Tape()
    _ACTIVE_TAPE = tape
    try:
        yield tape
    finally:
        _ACTIVE_TAPE = prev


class Tensor:
    """Thin wrapper around a float64 ndarray participating in the tape."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, pairs, name: str) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is not None:
        tape.records.append((out, tuple(pairs), name))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient g to `shape` by summing broadcast axes."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    return _record(
        out,
        ((a, lambda g, s=a.data.shape: _unbroadcast(g, s)),
         (b, lambda g, s=b.data.shape: _unbroadcast(g, s))),
        "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    return _record(
        out,
        ((a, lambda g, s=a.data.shape: _unbroadcast(g, s)),
         (b, lambda g, s=b.data.shape: _unbroadcast(-g, s))),
        "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    return _record(
        out,
        ((a, lambda g, o=b.data, s=a.data.shape: _unbroadcast(g * o, s)),
         (b, lambda g, o=a.data, s=b.data.shape: _unbroadcast(g * o, s))),
        "mul",
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)
    return _record(
        out,
        ((a, lambda g, o=b.data, s=a.data.shape: _unbroadcast(g / o, s)),
         (b, lambda g, num=a.data, den=b.data, s=b.data.shape:
             _unbroadcast(-g * num / (den * den), s))),
        "div",
    )


def neg(a):
    a = as_tensor(a)
    out = Tensor(-a.data)
    return _record(out, ((a, lambda g: -g),), "neg")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires ndim >= 2 operands")
    out = Tensor(a.data @ b.data)

    def vjp_a(g, bd=b.data, s=a.data.shape):
        return _unbroadcast(g @ bd.swapaxes(-1, -2), s)

    def vjp_b(g, ad=a.data, s=b.data.shape):
        return _unbroadcast(ad.swapaxes(-1, -2) @ g, s)

    return _record(out, ((a, vjp_a), (b, vjp_b)), "matmul")


def exp(a):
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))
    return _record(out, ((a, lambda g, o=out.data: g * o),), "exp")


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    return _record(out, ((a, lambda g, x=a.data: g / x),), "log")


def sqrt(a):
    a = as_tensor(a)
    out = Tensor(np.sqrt(a.data))
    return _record(out, ((a, lambda g, o=out.data: g * (0.5 / o)),), "sqrt")


def square(a):
    a = as_tensor(a)
    out = Tensor(a.data * a.data)
    return _record(out, ((a, lambda g, x=a.data: 2.0 * g * x),), "square")


def tanh(a):
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data))
    return _record(out, ((a, lambda g, o=out.data: g * (1.0 - o * o)),), "tanh")


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, ((a, lambda g, x=a.data: g * (x > 0.0)),), "relu")


def silu(a):
    """x * sigmoid(x); the smooth nonlinearity used in the transformer MLPs."""
    a = as_tensor(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(a.data * sig)

    def vjp(g, x=a.data, s=sig):
        return g * (s * (1.0 + x * (1.0 - s)))

    return _record(out, ((a, vjp),), "silu")


def abs_(a):
    """Absolute value with subgradient 0 at 0 (deterministic l1 tie-break)."""
    a = as_tensor(a)
    out = Tensor(np.abs(a.data))
    return _record(out, ((a, lambda g, x=a.data: g * np.sign(x)),), "abs")


def sin(a):
    a = as_tensor(a)
    out = Tensor(np.sin(a.data))
    return _record(out, ((a, lambda g, x=a.data: g * np.cos(x)),), "sin")


def cos(a):
    a = as_tensor(a)
    out = Tensor(np.cos(a.data))
    return _record(out, ((a, lambda g, x=a.data: -g * np.sin(x)),), "cos")


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g, shape=a.data.shape, ax=axis, kd=keepdims):
        if ax is None:
            return np.broadcast_to(g, shape).copy()
        if not kd:
            g = np.expand_dims(g, ax)
        return np.broadcast_to(g, shape).copy()

    return _record(out, ((a, vjp),), "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def vjp(g, yv=y, ax=axis):
        return (g - (g * yv).sum(axis=ax, keepdims=True)) * yv

    return _record(out, ((a, vjp),), "softmax")


def transpose(a, axes):
    a = as_tensor(a)
    out = Tensor(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))
    return _record(out, ((a, lambda g, iv=inv: g.transpose(iv)),), "transpose")


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _record(out, ((a, lambda g, s=a.data.shape: g.reshape(s)),), "reshape")


def index(a, key):
    """Basic slicing (slices / ints); gradient scatters back into place."""
    a = as_tensor(a)
    out = Tensor(a.data[key])

    def vjp(g, shape=a.data.shape, k=key):
        z = np.zeros(shape)
        z[k] = g
        return z

    return _record(out, ((a, vjp),), "index")


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)
    pairs = []
    for i, p in enumerate(parts):
        def vjp(g, lo=offsets[i], hi=offsets[i + 1], ax=axis):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            return g[tuple(sl)]
        pairs.append((p, vjp))
    return _record(out, pairs, "concat")


def take_rows(table, ids):
    """Row gather (embedding lookup); ids is a constant int array."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])

    def vjp(g, shape=table.data.shape, ix=ids):
        z = np.zeros(shape)
        np.add.at(z, ix, g)
        return z

    return _record(out, ((table, vjp),), "take_rows")


def custom(name, out_data, pairs):
    """Record a composite op with hand-derived VJPs.

    `pairs` is a sequence of (input Tensor, vjp callable). The vjp receives
    the upstream gradient for `out_data` and returns the gradient for the
    paired input, both as ndarrays.
    """
    out = Tensor(out_data)
    return _record(out, tuple(pairs), name)


# ---------------------------------------------------------------------------
# backward pass


def backward(tape: Tape, loss: Tensor, leaves) -> list[np.ndarray]:
    """Accumulate d(loss)/d(leaf) for each leaf tensor via the tape."""
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for out, pairs, _name in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for tin, vjp in pairs:
            contrib = vjp(g)
            key = id(tin)
            prev = grads.get(key)
            grads[key] = contrib if prev is None else prev + contrib
    results = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        results.append(np.zeros_like(leaf.data) if g is None else
                       np.broadcast_to(g, leaf.data.shape).astype(np.float64))
    return results


def first_nonfinite(tape: Tape) -> str | None:
    """Name of the first op on the tape whose output is non-finite."""
    for out, _pairs, name in tape.records:
        if not np.all(np.isfinite(out.data)):
            return name
    return None


def check_finite_loss(tape: Tape, loss: Tensor):
    if np.all(np.isfinite(loss.data)):
        return
    culprit = first_nonfinite(tape)
    raise NumericError(
        f"non-finite loss; first non-finite intermediate produced by op "
        f"'{culprit or 'unknown'}'")


def sinusoidal_embedding(positions, width: int) -> np.ndarray:
    """Fixed sin/cos position code, shape (len(positions), width)."""
    positions = np.asarray(positions, dtype=np.float64)
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = positions[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if emb.shape[1] < width:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], width - emb.shape[1]))], axis=1)
    return emb
