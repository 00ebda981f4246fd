"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional gradient; operations build
a graph of parent links and backward closures, and :meth:`Tensor.backward`
walks the graph in reverse topological order accumulating gradients. Only the
operations the two generative models actually need are implemented:
elementwise arithmetic, broadcasting, matmul, reductions, reshape/pad,
ReLU/SiLU, 1-D convolution, and nearest-neighbor upsampling.

Everything is float64: the finite-difference oracle in :mod:`.gradcheck`
demands more precision than float32 arithmetic can deliver.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


_grad_enabled = True


class no_grad:
    """Context manager that disables graph building (e.g. while sampling)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An ndarray with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], None] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        if _grad_enabled:
            self.requires_grad = bool(requires_grad) or any(
                p.requires_grad for p in _parents)
        else:
            self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- graph mechanics ---------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse-accumulate gradients from this tensor through the graph."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    # -- convenience -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- operators ---------------------------------------------------------

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(self, other)
    def __sub__(self, other): return add(self, neg(_ensure(other)))
    def __rsub__(self, other): return add(_ensure(other), neg(self))
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(self, other)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / float(other))
    def __matmul__(self, other): return matmul(self, other)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return tmean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, *shape)


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise -----------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))
    out._backward = backward
    return out


def neg(a: Tensor) -> Tensor:
    a = _ensure(a)
    out = Tensor(-a.data, _parents=(a,))

    def backward(g):
        a._accumulate(-g)
    out._backward = backward
    return out


def mul(a: Tensor, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    out = Tensor(a.data * b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))
    out._backward = backward
    return out


def power(a: Tensor, p: float) -> Tensor:
    a = _ensure(a)
    p = float(p)
    out = Tensor(a.data ** p, _parents=(a,))

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1.0))
    out._backward = backward
    return out


def exp(a: Tensor) -> Tensor:
    a = _ensure(a)
    out = Tensor(np.exp(a.data), _parents=(a,))

    def backward(g):
        a._accumulate(g * out.data)
    out._backward = backward
    return out


def relu(a: Tensor) -> Tensor:
    a = _ensure(a)
    out = Tensor(np.maximum(a.data, 0.0), _parents=(a,))

    def backward(g):
        a._accumulate(g * (a.data > 0.0))
    out._backward = backward
    return out


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x) — the smooth ReLU-family nonlinearity used throughout."""
    a = _ensure(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(a.data * sig, _parents=(a,))

    def backward(g):
        a._accumulate(g * sig * (1.0 + a.data * (1.0 - sig)))
    out._backward = backward
    return out


# -- linear algebra and reductions ----------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    out._backward = backward
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,))
    axes = ((axis,) if isinstance(axis, int) else axis)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, tuple(ax % a.data.ndim for ax in axes))
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())
    out._backward = backward
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


def reshape(a: Tensor, *shape) -> Tensor:
    a = _ensure(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor(a.data.reshape(shape), _parents=(a,))

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))
    out._backward = backward
    return out


def pad1d(a: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    a = _ensure(a)
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    out = Tensor(np.pad(a.data, width), _parents=(a,))
    stop = out.data.shape[-1] - right

    def backward(g):
        a._accumulate(g[..., left:stop])
    out._backward = backward
    return out


# -- signal ops ------------------------------------------------------------

def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation along the last axis.

    ``x``: [batch, ch_in, length]; ``weight``: [ch_out, ch_in, kernel];
    ``bias``: [ch_out] or None. Output length floor((L + 2p - K)/s) + 1.
    """
    x, weight = _ensure(x), _ensure(weight)
    if x.data.ndim != 3 or weight.data.ndim != 3:
        raise ValueError("conv1d expects x [N,C,L] and weight [O,C,K]")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError("conv1d channel mismatch")
    k, s, p = weight.data.shape[2], int(stride), int(padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p))) if p else x.data
    if xp.shape[2] < k:
        raise ValueError("conv1d input shorter than kernel")
    win = sliding_window_view(xp, k, axis=2)[:, :, ::s, :]  # [N, C, Lout, K]
    out_data = np.tensordot(win, weight.data, axes=([1, 3], [1, 2]))  # [N,Lout,O]
    out_data = np.ascontiguousarray(out_data.transpose(0, 2, 1))
    parents = (x, weight) if bias is None else (x, weight, bias)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None]
    out = Tensor(out_data, _parents=parents)
    l_out = out_data.shape[2]

    def backward(g):
        if weight.requires_grad:
            # [O,C,K] = contract batch and output-position axes.
            weight._accumulate(np.tensordot(g, win, axes=([0, 2], [0, 2])))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            # d/d(window) then scatter-add windows back onto the padded input.
            dwin = np.tensordot(g, weight.data, axes=([1], [0]))  # [N,Lout,C,K]
            dxp = np.zeros_like(xp)
            for kk in range(k):
                dxp[:, :, kk:kk + l_out * s:s] += dwin[:, :, :, kk].transpose(0, 2, 1)
            x._accumulate(dxp[:, :, p:xp.shape[2] - p] if p else dxp)
    out._backward = backward
    return out


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Repeat each sample ``factor`` times along the last axis."""
    x = _ensure(x)
    f = int(factor)
    out = Tensor(np.repeat(x.data, f, axis=-1), _parents=(x,))

    def backward(g):
        x._accumulate(g.reshape(*x.data.shape, f).sum(axis=-1))
    out._backward = backward
    return out


# -- parameter helpers -----------------------------------------------------

def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
