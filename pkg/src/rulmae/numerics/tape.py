"""Reverse-mode accumulation over a recorded operation tape.

Ops executed inside ``with Tape() as tape:`` are appended in execution order,
so replaying the list backwards is already a valid topological order.
Outside a tape the same functions just compute forward values.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels as K

_local = threading.local()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, inputs, bwd in reversed(self.records):
            if out.grad is None:
                continue
            grads = bwd(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g


def _active() -> Tape | None:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _record(data, inputs: Sequence[Tensor], bwd: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = _active()
    if needs and tape is not None:
        tape.records.append((out, tuple(inputs), bwd))
    return out


# --- differentiable ops ------------------------------------------------------

def linear(x, W, b=None) -> Tensor:
    x, W = as_tensor(x), as_tensor(W)
    ins = [x, W] + ([as_tensor(b)] if b is not None else [])
    y, cache = K.linear_fwd(x.data, W.data, None if b is None else ins[2].data)
    return _record(y, ins, lambda g: K.linear_bwd(g, cache))


def conv1d(x, w, b=None, padding: int = 1) -> Tensor:
    x, w = as_tensor(x), as_tensor(w)
    ins = [x, w] + ([as_tensor(b)] if b is not None else [])
    y, cache = K.conv1d_fwd(x.data, w.data, None if b is None else ins[2].data, padding)
    return _record(y, ins, lambda g: K.conv1d_bwd(g, cache))


def glu(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    y, cache = K.glu_fwd(a.data, b.data)
    return _record(y, [a, b], lambda g: K.glu_bwd(g, cache))


def relu(x) -> Tensor:
    x = as_tensor(x)
    y, keep = K.relu_fwd(x.data)
    return _record(y, [x], lambda g: (K.relu_bwd(g, keep),))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    y, cache = K.add_fwd(a.data, b.data)
    return _record(y, [a, b], lambda g: K.add_bwd(g, cache))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    y, cache = K.layer_norm_fwd(x.data, gamma.data, beta.data, eps)
    return _record(y, [x, gamma, beta], lambda g: K.layer_norm_bwd(g, cache))


def dropout(x, rate: float, rng, training: bool) -> Tensor:
    x = as_tensor(x)
    y, scale = K.dropout_fwd(x.data, rate, rng, training)
    if scale is None:
        return x
    return _record(y, [x], lambda g: (K.dropout_bwd(g, scale),))


def mha(q, k, v, Wq, bq, Wk, bk, Wv, bv, Wo, bo, heads: int) -> Tensor:
    ins = [as_tensor(t) for t in (q, k, v, Wq, bq, Wk, bk, Wv, bv, Wo, bo)]
    y, cache = K.mha_fwd(*(t.data for t in ins), heads=heads)
    return _record(y, ins, lambda g: K.mha_bwd(g, cache))


def self_attention(x, Wq, bq, Wk, bk, Wv, bv, Wo, bo, heads: int) -> Tensor:
    x = as_tensor(x)
    ws = [as_tensor(t) for t in (Wq, bq, Wk, bk, Wv, bv, Wo, bo)]
    y, cache = K.mha_fwd(x.data, x.data, x.data, *(t.data for t in ws), heads=heads)

    def bwd(g):
        dq, dk, dv, *dw = K.mha_bwd(g, cache)
        return (dq + dk + dv, *dw)

    return _record(y, [x, *ws], bwd)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return _record(x.data.reshape(shape), [x], lambda g: (g.reshape(src),))


def gather_rows(x, idx) -> Tensor:
    x = as_tensor(x)
    y, cache = K.gather_rows_fwd(x.data, idx)
    return _record(y, [x], lambda g: (K.gather_rows_bwd(g, cache),))


def scatter_rows(x, idx, N: int) -> Tensor:
    x = as_tensor(x)
    y, cache = K.scatter_rows_fwd(x.data, idx, N)
    return _record(y, [x], lambda g: (K.scatter_rows_bwd(g, cache),))


def overlap_average(patches, P: int) -> Tensor:
    patches = as_tensor(patches)
    y, cache = K.overlap_average_fwd(patches.data, P)
    return _record(y, [patches], lambda g: (K.overlap_average_bwd(g, cache),))


def mse(pred, target, mask=None) -> Tensor:
    pred = as_tensor(pred)
    target = as_tensor(target)
    val, cache = K.mse_fwd(pred.data, target.data, mask)

    def bwd(g):
        d = K.mse_bwd(g, cache)
        return d, -d

    return _record(np.asarray(val), [pred, target], bwd)
