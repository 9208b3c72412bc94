"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Everything downstream (front-ends, enhancement, encoder/decoder, losses) is
composed from the primitives here. Each differentiable op records a backward
closure onto the innermost active ``Graph`` -- a define-by-run tape that is
rebuilt on every forward pass -- and ``backward`` replays the tape in reverse
order, accumulating into ``Tensor.grad`` with ``+=`` so a parameter feeding
several branches collects every contribution.

When no graph is active, ops run as plain numpy with no recording; that is
the inference path used by decoding and evaluation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "Graph", "backward", "parameter", "AdamW",
    "matmul", "add", "sub", "mul", "scale", "relu", "sigmoid",
    "softmax", "log_softmax", "layernorm", "conv1d", "depthwise_conv1d",
    "concat", "reshape", "transpose", "rows", "pick",
]

_ACTIVE: list["Graph"] = []


class Tensor:
    """Dense float64 value with a lazily materialized gradient buffer.

    Tensors are value-semantic for ops (inputs are never mutated); only the
    optimizer writes ``data`` in place, after the graph that used it is done.
    """

    __slots__ = ("data", "node_id", "_grad", "_graph")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.node_id = None
        self._grad = None
        self._graph = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; reads as zeros before any backward pass."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64)  # owns its buffer
        else:
            self._grad += g

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce_mean(self, axis, keepdims)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Graph:
    """Define-by-run tape: op records in forward order, replayed in reverse.

    Record order is topological by construction (an op's inputs were created
    before it ran), so ``backward`` visits each record exactly once.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Graph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _ACTIVE.pop()
        if popped is not self:
            raise RuntimeError("graph contexts exited out of order")
        return False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], bwd: Callable) -> None:
        out.node_id = len(self.records)
        out._graph = self
        self.records.append((out, inputs, bwd))

    def backward(self, loss: Tensor, seed: float = 1.0) -> None:
        """Populate gradients of every tensor reachable from ``loss``.

        ``seed`` scales the whole pass (useful for batch averaging).
        Tensors not on a path to the loss keep their zero gradient.
        """
        if loss.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        loss._accum(np.full(loss.data.shape, float(seed)))
        for out, _inputs, bwd in reversed(self.records):
            if out._grad is not None:
                bwd(out._grad)


def backward(loss: Tensor, seed: float = 1.0) -> None:
    if loss._graph is None:
        raise ValueError("loss is not attached to a graph; run the forward pass inside `with Graph():`")
    loss._graph.backward(loss, seed)


def parameter(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> Tensor:
    """Learnable tensor initialized uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=tuple(shape)))


def _emit(out: Tensor, inputs: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    if _ACTIVE:
        _ACTIVE[-1]._record(out, inputs, bwd)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape == b.data.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    va, vb = a.data, b.data
    if va.ndim < 2 or vb.ndim < 2:
        raise ValueError(f"matmul needs operands of rank >= 2, got {va.shape} and {vb.shape}")
    if va.shape[-1] != vb.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {va.shape} vs {vb.shape}")
    try:
        out = Tensor(va @ vb)
    except ValueError:
        raise ValueError(f"matmul batch dimensions do not broadcast: {va.shape} vs {vb.shape}") from None

    def bwd(g: np.ndarray) -> None:
        a._accum(_unbroadcast(g @ vb.swapaxes(-1, -2), va.shape))
        b._accum(_unbroadcast(va.swapaxes(-1, -2) @ g, vb.shape))

    return _emit(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)

    def bwd(g: np.ndarray) -> None:
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _emit(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = Tensor(a.data - b.data)

    def bwd(g: np.ndarray) -> None:
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return _emit(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    _check_broadcast(a, b, "mul")
    va, vb = a.data, b.data
    out = Tensor(va * vb)

    def bwd(g: np.ndarray) -> None:
        a._accum(_unbroadcast(g * vb, va.shape))
        b._accum(_unbroadcast(g * va, vb.shape))

    return _emit(out, (a, b), bwd)


def scale(x: Tensor, factor: float) -> Tensor:
    f = float(factor)
    out = Tensor(x.data * f)

    def bwd(g: np.ndarray) -> None:
        x._accum(g * f)

    return _emit(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    vx = x.data
    out = Tensor(np.maximum(vx, 0.0))

    def bwd(g: np.ndarray) -> None:
        x._accum(g * (vx > 0.0))

    return _emit(out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, computed without overflow for large |x|."""
    vx = x.data
    z = np.exp(-np.abs(vx))
    s = np.where(vx >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = Tensor(s)

    def bwd(g: np.ndarray) -> None:
        x._accum(g * s * (1.0 - s))

    return _emit(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; slices sum to 1."""
    vx = x.data
    m = vx.max(axis=axis, keepdims=True)
    e = np.exp(vx - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g: np.ndarray) -> None:
        x._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _emit(out, (x,), bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    vx = x.data
    m = vx.max(axis=axis, keepdims=True)
    shifted = vx - m
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(y)

    def bwd(g: np.ndarray) -> None:
        x._accum(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _emit(out, (x,), bwd)


def layernorm(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize slices along ``axis`` to zero mean, unit variance (eps-damped)."""
    vx = x.data
    n = vx.shape[axis]
    if n < 2:
        raise ValueError(f"layernorm axis dimension must be >= 2, got {n}")
    mu = vx.mean(axis=axis, keepdims=True)
    xc = vx - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = Tensor(xc * inv)

    def bwd(g: np.ndarray) -> None:
        dvar = (g * xc).sum(axis=axis, keepdims=True) * (-0.5) * inv ** 3
        dxc = g * inv + dvar * (2.0 * xc / n)
        x._accum(dxc - dxc.mean(axis=axis, keepdims=True))

    return _emit(out, (x,), bwd)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """1-D convolution over time.

    ``x`` is [T, C_in], ``kernel`` is [k, C_in, C_out]; output is
    [(T + 2*padding - k)//stride + 1, C_out].
    """
    vx, vk = x.data, kernel.data
    if vx.ndim != 2 or vk.ndim != 3:
        raise ValueError(f"conv1d expects x [T, C_in] and kernel [k, C_in, C_out], got {vx.shape} and {vk.shape}")
    if vx.shape[1] != vk.shape[1]:
        raise ValueError(f"conv1d channel mismatch: input {vx.shape} vs kernel {vk.shape}")
    if stride < 1:
        raise ValueError(f"conv1d stride must be >= 1, got {stride}")
    t, c_in = vx.shape
    k, _, c_out = vk.shape
    t_out = (t + 2 * padding - k) // stride + 1
    if t_out < 1:
        raise ValueError(
            f"conv1d output would be empty: T={t}, k={k}, stride={stride}, padding={padding}")

    xp = np.zeros((t + 2 * padding, c_in))
    xp[padding:padding + t] = vx
    win = sliding_window_view(xp, k, axis=0)[::stride]  # [t_out, c_in, k]
    y = np.einsum("tci,ico->to", win, vk)
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)

    def bwd(g: np.ndarray) -> None:
        kernel._accum(np.einsum("tci,to->ico", win, g))
        dxp = np.zeros_like(xp)
        for i in range(k):
            dxp[i:i + stride * t_out:stride] += g @ vk[i].T
        x._accum(dxp[padding:padding + t])
        if bias is not None:
            bias._accum(g.sum(axis=0))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _emit(out, inputs, bwd)


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel 1-D convolution, stride 1, same padding (odd k)."""
    vx, vk = x.data, kernel.data
    if vx.ndim != 2 or vk.ndim != 2 or vx.shape[1] != vk.shape[1]:
        raise ValueError(f"depthwise_conv1d expects x [T, C] and kernel [k, C], got {vx.shape} and {vk.shape}")
    k = vk.shape[0]
    if k % 2 == 0:
        raise ValueError(f"depthwise_conv1d kernel width must be odd, got {k}")
    t = vx.shape[0]
    pad = (k - 1) // 2
    xp = np.zeros((t + 2 * pad, vx.shape[1]))
    xp[pad:pad + t] = vx
    win = sliding_window_view(xp, k, axis=0)  # [t, c, k]
    out = Tensor(np.einsum("tck,kc->tc", win, vk))

    def bwd(g: np.ndarray) -> None:
        kernel._accum(np.einsum("tck,tc->kc", win, g))
        dxp = np.zeros_like(xp)
        for i in range(k):
            dxp[i:i + t] += g * vk[i]
        x._accum(dxp[pad:pad + t])

    return _emit(out, (x, kernel), bwd)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat needs at least one tensor")
    try:
        out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    except ValueError:
        raise ValueError(f"concat shapes incompatible along axis {axis}: "
                         f"{[p.shape for p in parts]}") from None
    offsets = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def bwd(g: np.ndarray) -> None:
        for p, piece in zip(parts, np.split(g, offsets, axis=axis)):
            p._accum(piece)

    return _emit(out, tuple(parts), bwd)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.data.shape
    out = Tensor(x.data.reshape(tuple(shape)))

    def bwd(g: np.ndarray) -> None:
        x._accum(g.reshape(src))

    return _emit(out, (x,), bwd)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes))

    def bwd(g: np.ndarray) -> None:
        x._accum(np.transpose(g, inverse))

    return _emit(out, (x,), bwd)


def rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (embedding lookup); backward scatter-adds."""
    idx = np.asarray(index, dtype=np.intp)
    out = Tensor(table.data[idx])

    def bwd(g: np.ndarray) -> None:
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        table._accum(dt)

    return _emit(out, (table,), bwd)


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """Select one column per row: out[i] = x[i, index[i]]."""
    vx = x.data
    if vx.ndim != 2:
        raise ValueError(f"pick expects a 2-D tensor, got shape {vx.shape}")
    idx = np.asarray(index, dtype=np.intp)
    if idx.shape != (vx.shape[0],):
        raise ValueError(f"pick index shape {idx.shape} does not match {vx.shape[0]} rows")
    ar = np.arange(vx.shape[0])
    out = Tensor(vx[ar, idx])

    def bwd(g: np.ndarray) -> None:
        dx = np.zeros_like(vx)
        np.add.at(dx, (ar, idx), g)
        x._accum(dx)

    return _emit(out, (x,), bwd)


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if keepdims else np.full(shape, g)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape).copy()


def _reduce_sum(x: Tensor, axis, keepdims: bool) -> Tensor:
    src = x.data.shape
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g: np.ndarray) -> None:
        x._accum(_expand_reduced(g, src, axis, keepdims))

    return _emit(out, (x,), bwd)


def _reduce_mean(x: Tensor, axis, keepdims: bool) -> Tensor:
    src = x.data.shape
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    count = x.size if axis is None else np.prod(
        [src[a] for a in ((axis,) if isinstance(axis, int) else axis)])

    def bwd(g: np.ndarray) -> None:
        x._accum(_expand_reduced(g, src, axis, keepdims) / count)

    return _emit(out, (x,), bwd)


class AdamW:
    """Adam with decoupled weight decay over a named parameter table."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.params.items():
            g = p._grad
            m, v = self._m[name], self._v[name]
            m *= b1
            v *= b2
            if g is not None:
                m += (1.0 - b1) * g
                v += (1.0 - b2) * g * g
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
