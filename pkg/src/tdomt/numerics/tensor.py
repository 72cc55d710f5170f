"""Dense tensors with a reverse-mode gradient tape.

Operations are recorded only while a :class:`Tape` is active and at least
one input requires a gradient, so inference runs tape-free.  A tape is
single-use: after :meth:`Tape.backward` it must be discarded (or
:meth:`Tape.reset`) before recording the next step.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, DomainError, TapeError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    # Operator sugar; all routes go through the recorded primitives below.
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple
    backward: Callable


@dataclass
class Tape:
    records: list = field(default_factory=list)
    consumed: bool = False

    def record(self, out, inputs, backward):
        if self.consumed:
            raise TapeError("tape already consumed by backward(); reset it before recording")
        self.records.append(_Record(out, tuple(inputs), backward))

    def reset(self):
        self.records.clear()
        self.consumed = False

    def __len__(self):
        return len(self.records)

    def backward(self, loss: Tensor):
        if self.consumed:
            raise TapeError("backward() already called on this tape; reset before reuse")
        if loss.data.size != 1:
            raise TapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not any(r.out is loss for r in reversed(self.records)):
            raise TapeError("loss was not produced on this tape (detached)")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            rec.out.grad = g
            for inp, ig in zip(rec.inputs, rec.backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                leaves[key] = inp
                grads[key] = grads[key] + ig if key in grads else ig
        # Remaining entries are leaves: parameters and caller-supplied inputs.
        for key, g in grads.items():
            t = leaves[key]
            t.grad = g if t.grad is None else t.grad + g
        for rec in self.records:
            for inp in rec.inputs:
                if inp.requires_grad and inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
        self.consumed = True


_active: list = []


@contextlib.contextmanager
def recording(tape: Tape | None = None):
    """Record primitive operations on ``tape`` (a fresh one if omitted)."""
    tape = tape if tape is not None else Tape()
    _active.append(tape)
    try:
        yield tape
    finally:
        _active.pop()


def active_tape():
    return _active[-1] if _active else None


def backward(loss: Tensor, tape: Tape | None = None):
    tape = tape if tape is not None else active_tape()
    if tape is None:
        raise TapeError("no active tape: loss is detached")
    tape.backward(loss)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dt = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dt))


def _emit(out_data, inputs, backward_fn):
    req = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    tape = active_tape()
    if req and tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def exp(a):
    y = np.exp(a.data)
    return _emit(y, (a,), lambda g: (g * y,))


def log(a):
    x = a.data
    return _emit(np.log(x), (a,), lambda g: (g / x,))


def relu(a):
    x = a.data
    y = np.maximum(x, 0)
    return _emit(y, (a,), lambda g: (g * (y > 0),))


def total(a):
    """Sum of all entries (named to avoid shadowing the builtin)."""
    shape = a.shape
    return _emit(np.asarray(a.data.sum(), dtype=a.dtype), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_axis(a, axis, keepdims=False):
    shape = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def dot(u, v):
    """Inner product of two vectors (or row-wise for matching 2-D inputs)."""
    ud, vd = u.data, v.data
    out = (ud * vd).sum(axis=-1)
    return _emit(out, (u, v), lambda g: (g[..., None] * vd, g[..., None] * ud))


# ---------------------------------------------------------------- shape ops

def reshape(a, shape):
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return _emit(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def index(a, idx):
    shape = a.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx, g) if _needs_add_at(idx) else out.__setitem__(idx, g)
        return (out,)

    return _emit(a.data[idx], (a,), bw)


def _needs_add_at(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis=0):
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """Matrix product; leading batch dimensions broadcast numpy-style."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    if bd.ndim == 2 and ad.ndim > 2:
        # Fold batch dims into rows so both passes are single GEMMs.
        lead = ad.shape[:-1]
        a2 = ad.reshape(-1, ad.shape[-1])
        out = (a2 @ bd).reshape(lead + (bd.shape[-1],))

        def bw_folded(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bd.T).reshape(ad.shape), a2.T @ g2

        return _emit(out, (a, b), bw_folded)

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _emit(ad @ bd, (a, b), bw)


def linear(x, w, b=None):
    """x @ w (+ b) with x of shape (..., d_in) and w of shape (d_in, d_out)."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ---------------------------------------------------------------- fused ops

def softmax(x, axis=-1, bias=None):
    """Softmax along ``axis``; ``bias`` is an additive mask (0 or -inf)."""
    if axis < 0:
        axis += x.ndim
    if not 0 <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    z = x.data if bias is None else x.data + bias
    moved = axis != x.ndim - 1
    if moved:
        z = np.moveaxis(z, axis, -1)
    y = kernels.softmax_lastaxis(z)

    def bw(g):
        gg = np.moveaxis(g, axis, -1) if moved else g
        dx = kernels.softmax_lastaxis_backward(y, np.ascontiguousarray(gg))
        return (np.moveaxis(dx, -1, axis) if moved else dx,)

    out = np.moveaxis(y, -1, axis) if moved else y
    return _emit(out, (x,), bw)


def layer_norm(x, gain, bias, eps=1e-5):
    if eps <= 0:
        raise DomainError("layer_norm epsilon must be positive")
    xd = x.data
    y, mean, rstd = kernels.layer_norm_forward(xd, gain.data, bias.data, eps)

    def bw(g):
        dx, dg, db = kernels.layer_norm_backward(g, xd, mean, rstd, gain.data)
        return dx, dg, db

    return _emit(y, (x, gain, bias), bw)


def embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        kernels.scatter_add_rows(out, ids.reshape(-1), g)
        return (out,)

    return _emit(table.data[ids], (table,), bw)


def dropout(x, p, rng):
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape, dtype=np.float32) >= p) * np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,))


def cross_entropy(logits, targets, weights=None, smoothing=0.0):
    """Weighted, label-smoothed cross-entropy summed over rows of ``logits``."""
    v = logits.shape[-1]
    flat = logits.data.reshape(-1, v)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size and (targets.max() >= v or targets.min() < 0):
        raise DomainError(f"target id out of range for vocabulary of size {v}")
    w = np.ones(len(targets), dtype=logits.dtype) if weights is None else np.asarray(weights, dtype=logits.dtype).reshape(-1)
    loss, grad = kernels.smoothed_cross_entropy(flat, targets, w, smoothing)
    shape = logits.shape
    return _emit(np.asarray(loss, dtype=logits.dtype), (logits,), lambda g: ((g * grad).reshape(shape),))


def l2_normalize(x, eps=0.0):
    """Row-wise unit normalization along the last axis; zero rows are an error."""
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=-1, keepdims=True))
    if np.any(norm <= eps):
        raise DomainError("cannot normalize a zero-norm vector")
    y = xd / norm

    def bw(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norm,)

    return _emit(y, (x,), bw)


def cosine_similarity(u, v):
    """Cosine similarity along the last axis (scalar for 1-D inputs)."""
    if u.shape != v.shape:
        raise DimensionError(f"cosine_similarity shape mismatch: {u.shape} vs {v.shape}")
    return dot(l2_normalize(u), l2_normalize(v))


def masked_fill(x, mask, value):
    """Replace entries where ``mask`` is True by a constant (no gradient there)."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    return _emit(out, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),))
