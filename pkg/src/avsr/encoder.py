"""Conformer-style sequence encoder (desk-scale)."""

from __future__ import annotations

from .layers import (ConvModule, FeedForward, LayerNorm, MultiHeadAttention,
                     Tensor, sinusoidal_encoding)
from .tensor import add, scale


class ConformerBlock:
    """Half-step FF, self-attention, depthwise conv, half-step FF.

    Pre-norm with residual connections around each sublayer and a closing
    layer norm, so a block with zeroed weights reduces to normalization of
    its input.
    """

    def __init__(self, rng, dim: int, ff_dim: int, heads: int, kernel: int):
        self.ff1 = FeedForward(rng, dim, ff_dim)
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.conv = ConvModule(rng, dim, kernel)
        self.ff2 = FeedForward(rng, dim, ff_dim)
        self.norm_ff1 = LayerNorm(dim)
        self.norm_attn = LayerNorm(dim)
        self.norm_conv = LayerNorm(dim)
        self.norm_ff2 = LayerNorm(dim)
        self.norm_out = LayerNorm(dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = add(x, scale(self.ff1(self.norm_ff1(x)), 0.5))
        h = self.norm_attn(x)
        x = add(x, self.attn(h, h))
        x = add(x, self.conv(self.norm_conv(x)))
        x = add(x, scale(self.ff2(self.norm_ff2(x)), 0.5))
        return self.norm_out(x)

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, sub in (("ff1", self.ff1), ("attn", self.attn), ("conv", self.conv),
                          ("ff2", self.ff2), ("norm_ff1", self.norm_ff1),
                          ("norm_attn", self.norm_attn), ("norm_conv", self.norm_conv),
                          ("norm_ff2", self.norm_ff2), ("norm_out", self.norm_out)):
            out.update(sub.params(f"{prefix}.{name}"))
        return out


class ConformerEncoder:
    def __init__(self, rng, dim: int, ff_dim: int, heads: int, kernel: int,
                 layers: int, positional: bool = True):
        self.dim = dim
        self.positional = positional
        self.blocks = [ConformerBlock(rng, dim, ff_dim, heads, kernel)
                       for _ in range(layers)]

    def __call__(self, x: Tensor) -> Tensor:
        if self.positional:
            x = add(x, Tensor(sinusoidal_encoding(x.shape[0], self.dim)))
        for block in self.blocks:
            x = block(x)
        return x

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, block in enumerate(self.blocks):
            out.update(block.params(f"{prefix}.block{i}"))
        return out
