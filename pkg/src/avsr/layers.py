"""Neural building blocks shared by the front-ends, encoder and decoder."""

from __future__ import annotations

import numpy as np

from .tensor import (Tensor, add, depthwise_conv1d, layernorm, matmul, mul,
                     parameter, relu, reshape, scale, softmax, transpose)

NEG_INF = -1e30  # large-but-finite mask value; exp underflows to exactly 0


class Linear:
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.weight = parameter(rng, (d_in, d_out), fan_in=d_in)
        self.bias = parameter(rng, (d_out,), fan_in=d_in) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return add(y, self.bias) if self.bias is not None else y

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out


class LayerNorm:
    """Normalization over the last axis with a learned affine."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim))
        self.beta = Tensor(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return add(mul(layernorm(x, axis=-1, eps=self.eps), self.gamma), self.beta)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


class FeedForward:
    def __init__(self, rng, dim: int, hidden: int):
        self.lin1 = Linear(rng, dim, hidden)
        self.lin2 = Linear(rng, hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(relu(self.lin1(x)))

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {**self.lin1.params(f"{prefix}.lin1"), **self.lin2.params(f"{prefix}.lin2")}


def causal_mask(n: int) -> np.ndarray:
    """[n, n] additive mask: 0 on/below the diagonal, NEG_INF above."""
    return np.triu(np.full((n, n), NEG_INF), k=1)


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    """Standard sin/cos positional table, shape [length, dim]."""
    pos = np.arange(length)[:, None]
    idx = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / dim)
    enc = np.zeros((length, dim))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


class MultiHeadAttention:
    """Scaled dot-product attention with head split/merge via reshape."""

    def __init__(self, rng, dim: int, heads: int):
        if dim % heads != 0:
            raise ValueError(f"attention heads ({heads}) must divide dim ({dim})")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)

    def _split(self, x: Tensor, length: int) -> Tensor:
        return transpose(reshape(x, (length, self.heads, self.head_dim)), (1, 0, 2))

    def __call__(self, queries: Tensor, memory: Tensor, mask: np.ndarray | None = None) -> Tensor:
        tq, tm = queries.shape[0], memory.shape[0]
        qh = self._split(self.q(queries), tq)                 # [H, Tq, dh]
        kh = self._split(self.k(memory), tm)
        vh = self._split(self.v(memory), tm)
        scores = scale(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / np.sqrt(self.head_dim))
        if mask is not None:
            scores = add(scores, Tensor(mask))
        ctx = matmul(softmax(scores, axis=-1), vh)            # [H, Tq, dh]
        merged = reshape(transpose(ctx, (1, 0, 2)), (tq, self.dim))
        return self.out(merged)

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, lin in (("q", self.q), ("k", self.k), ("v", self.v), ("out", self.out)):
            out.update(lin.params(f"{prefix}.{name}"))
        return out


class ConvModule:
    """Pointwise -> depthwise -> ReLU -> pointwise convolution block."""

    def __init__(self, rng, dim: int, kernel: int):
        self.pw_in = Linear(rng, dim, dim)
        self.depth = parameter(rng, (kernel, dim), fan_in=kernel)
        self.pw_out = Linear(rng, dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.pw_out(relu(depthwise_conv1d(self.pw_in(x), self.depth)))

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {**self.pw_in.params(f"{prefix}.pw_in"),
                f"{prefix}.depth": self.depth,
                **self.pw_out.params(f"{prefix}.pw_out")}
