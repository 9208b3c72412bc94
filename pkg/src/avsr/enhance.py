"""Visual-context audio feature enhancement.

Each audio frame queries the whole visual sequence through cross-modal
attention, the attended summary drives a two-convolution mask generator,
and the sigmoid mask gates the audio features residually before the two
modalities are fused for recognition. Attention is unmasked on purpose:
the context at frame t sees the full lip-movement sequence.
"""

from __future__ import annotations

import numpy as np

from .layers import sinusoidal_encoding
from .tensor import (Tensor, add, concat, conv1d, matmul, mul, parameter,
                     relu, reshape, scale, sigmoid, softmax, transpose)


class FeatureFusion:
    """Concatenate per-frame audio/visual features and project back to d1."""

    def __init__(self, rng, d1: int):
        self.weight = parameter(rng, (2 * d1, d1), fan_in=2 * d1)
        self.bias = parameter(rng, (d1,), fan_in=2 * d1)

    def __call__(self, f_a: Tensor, f_v: Tensor) -> Tensor:
        if f_a.shape[0] != f_v.shape[0]:
            raise ValueError(f"fusion length mismatch: audio {f_a.shape} vs visual {f_v.shape}")
        return add(matmul(concat([f_a, f_v], axis=1), self.weight), self.bias)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def enhance(f_a: Tensor, mask: Tensor) -> Tensor:
    """Residual gating: masked audio features summed back onto the original."""
    if f_a.shape != mask.shape:
        raise ValueError(f"enhance shape mismatch: features {f_a.shape} vs mask {mask.shape}")
    return add(mul(f_a, mask), f_a)


class ContextMaskEnhancer:
    """Cross-modal attention context, noise mask generation, and fusion.

    Projections are bias-free; the mask generator's two convolutions carry
    biases. ``heads`` > 1 splits the context dimension for multi-head
    attention (off by default); ``positional`` adds sinusoidal encodings to
    both feature streams before attention (off by default, for ablation).
    """

    def __init__(self, rng, d1: int, d2: int, kernel: int = 3, heads: int = 1,
                 positional: bool = False, mask_init_scale: float = 1.0):
        if heads < 1 or d2 % heads != 0:
            raise ValueError(f"context heads ({heads}) must divide d2 ({d2})")
        if kernel % 2 == 0:
            raise ValueError(f"mask kernel must be odd, got {kernel}")
        self.d1 = d1
        self.d2 = d2
        self.heads = heads
        self.kernel = kernel
        self.positional = positional
        self.w_q = parameter(rng, (d1, d2), fan_in=d1)
        self.w_k = parameter(rng, (d1, d2), fan_in=d1)
        self.w_v = parameter(rng, (d1, d2), fan_in=d1)
        self.conv1_kernel = parameter(rng, (kernel, d2, d2), fan_in=kernel * d2)
        self.conv1_bias = parameter(rng, (d2,), fan_in=kernel * d2)
        # damping the output conv starts the gate near one half; contrast
        # appears only under gradient pressure instead of init noise
        self.conv2_kernel = parameter(rng, (kernel, d2, d1), fan_in=kernel * d2)
        self.conv2_bias = parameter(rng, (d1,), fan_in=kernel * d2)
        if mask_init_scale != 1.0:
            self.conv2_kernel.data *= mask_init_scale
            self.conv2_bias.data *= mask_init_scale
        self.fusion = FeatureFusion(rng, d1)

    def visual_context(self, f_a: Tensor, f_v: Tensor) -> Tensor:
        """Attend each audio frame over the whole visual sequence -> [T, d2]."""
        if f_a.shape[0] != f_v.shape[0]:
            raise ValueError(f"context length mismatch: audio {f_a.shape} vs visual {f_v.shape}")
        t = f_a.shape[0]
        if self.positional:
            enc = Tensor(sinusoidal_encoding(t, self.d1))
            f_a = add(f_a, enc)
            f_v = add(f_v, enc)
        q = matmul(f_a, self.w_q)
        k = matmul(f_v, self.w_k)
        v = matmul(f_v, self.w_v)
        if self.heads == 1:
            weights = softmax(scale(matmul(q, transpose(k, (1, 0))), 1.0 / np.sqrt(self.d2)), axis=-1)
            return matmul(weights, v)
        hd = self.d2 // self.heads
        split = lambda x: transpose(reshape(x, (t, self.heads, hd)), (1, 0, 2))
        qh, kh, vh = split(q), split(k), split(v)
        weights = softmax(scale(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / np.sqrt(hd)), axis=-1)
        return reshape(transpose(matmul(weights, vh), (1, 0, 2)), (t, self.d2))

    def generate_mask(self, context: Tensor) -> Tensor:
        """Two same-padded convolutions (ReLU, then sigmoid) -> mask in (0, 1)."""
        pad = (self.kernel - 1) // 2
        h = relu(conv1d(context, self.conv1_kernel, self.conv1_bias, stride=1, padding=pad))
        return sigmoid(conv1d(h, self.conv2_kernel, self.conv2_bias, stride=1, padding=pad))

    def __call__(self, f_a: Tensor, f_v: Tensor) -> tuple[Tensor, Tensor]:
        """Full pass; returns (fused features [T, d1], mask [T, d1])."""
        mask = self.generate_mask(self.visual_context(f_a, f_v))
        return self.fusion(enhance(f_a, mask), f_v), mask

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.w_q": self.w_q,
               f"{prefix}.w_k": self.w_k,
               f"{prefix}.w_v": self.w_v,
               f"{prefix}.conv1.kernel": self.conv1_kernel,
               f"{prefix}.conv1.bias": self.conv1_bias,
               f"{prefix}.conv2.kernel": self.conv2_kernel,
               f"{prefix}.conv2.bias": self.conv2_bias}
        out.update(self.fusion.params(f"{prefix}.fusion"))
        return out


def dump_mask_csv(path, mask: np.ndarray) -> None:
    """Write a mask (rows = frames, cols = channels) as plain CSV."""
    from pathlib import Path

    tmp = Path(str(path) + ".tmp")
    np.savetxt(tmp, mask, delimiter=",", fmt="%.10g")
    tmp.replace(path)
