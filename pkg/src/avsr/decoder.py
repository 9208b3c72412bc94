"""Autoregressive transformer decoder with causal self-attention."""

from __future__ import annotations

import numpy as np

from .layers import (FeedForward, LayerNorm, Linear, MultiHeadAttention,
                     causal_mask, sinusoidal_encoding)
from .tensor import Tensor, add, parameter, rows


class DecoderBlock:
    def __init__(self, rng, dim: int, ff_dim: int, heads: int):
        self.self_attn = MultiHeadAttention(rng, dim, heads)
        self.cross_attn = MultiHeadAttention(rng, dim, heads)
        self.ff = FeedForward(rng, dim, ff_dim)
        self.norm_self = LayerNorm(dim)
        self.norm_cross = LayerNorm(dim)
        self.norm_ff = LayerNorm(dim)

    def __call__(self, x: Tensor, memory: Tensor, mask: np.ndarray) -> Tensor:
        h = self.norm_self(x)
        x = add(x, self.self_attn(h, h, mask=mask))
        x = add(x, self.cross_attn(self.norm_cross(x), memory))
        return add(x, self.ff(self.norm_ff(x)))

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, sub in (("self_attn", self.self_attn), ("cross_attn", self.cross_attn),
                          ("ff", self.ff), ("norm_self", self.norm_self),
                          ("norm_cross", self.norm_cross), ("norm_ff", self.norm_ff)):
            out.update(sub.params(f"{prefix}.{name}"))
        return out


class TransformerDecoder:
    """Teacher-forced or step-wise decoding over encoder memory.

    ``forward(memory, tokens_in)`` returns one logit row per input token;
    the causal mask guarantees row l depends only on tokens_in[:l+1].
    """

    def __init__(self, rng, vocab_size: int, dim: int, ff_dim: int, heads: int,
                 layers: int):
        self.dim = dim
        self.embed = parameter(rng, (vocab_size, dim), fan_in=dim)
        self.blocks = [DecoderBlock(rng, dim, ff_dim, heads) for _ in range(layers)]
        self.norm_out = LayerNorm(dim)
        self.proj = Linear(rng, dim, vocab_size)

    def forward(self, memory: Tensor, tokens_in: list[int]) -> Tensor:
        if not tokens_in:
            raise ValueError("decoder needs at least one input token")
        n = len(tokens_in)
        x = add(rows(self.embed, np.asarray(tokens_in)),
                Tensor(sinusoidal_encoding(n, self.dim)))
        mask = causal_mask(n)
        for block in self.blocks:
            x = block(x, memory, mask)
        return self.proj(self.norm_out(x))

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {f"{prefix}.embed": self.embed}
        for i, block in enumerate(self.blocks):
            out.update(block.params(f"{prefix}.block{i}"))
        out.update(self.norm_out.params(f"{prefix}.norm_out"))
        out.update(self.proj.params(f"{prefix}.proj"))
        return out
