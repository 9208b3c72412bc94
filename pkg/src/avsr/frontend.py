"""Front-ends mapping raw feature streams to frame-aligned sequences.

The visual stream keeps its frame rate (stride 1); the audio stream is
reduced 4x by two stride-2 convolutions so both come out at one feature
vector per video frame.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, conv1d, parameter, relu


class VisualFrontend:
    """Two same-padded 1-D convolutions with ReLU, one output per frame."""

    def __init__(self, rng, in_dim: int, out_dim: int, kernel: int = 3):
        if kernel % 2 == 0:
            raise ValueError(f"visual front-end kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.conv1_kernel = parameter(rng, (kernel, in_dim, out_dim), fan_in=kernel * in_dim)
        self.conv1_bias = parameter(rng, (out_dim,), fan_in=kernel * in_dim)
        self.conv2_kernel = parameter(rng, (kernel, out_dim, out_dim), fan_in=kernel * out_dim)
        self.conv2_bias = parameter(rng, (out_dim,), fan_in=kernel * out_dim)

    def __call__(self, frames: np.ndarray) -> Tensor:
        pad = (self.kernel - 1) // 2
        h = relu(conv1d(Tensor(frames), self.conv1_kernel, self.conv1_bias, stride=1, padding=pad))
        return relu(conv1d(h, self.conv2_kernel, self.conv2_bias, stride=1, padding=pad))

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.conv1.kernel": self.conv1_kernel,
                f"{prefix}.conv1.bias": self.conv1_bias,
                f"{prefix}.conv2.kernel": self.conv2_kernel,
                f"{prefix}.conv2.bias": self.conv2_bias}


class AudioFrontend:
    """Two stride-2 1-D convolutions with ReLU: S frames in, S/4 out.

    Inputs whose length is not a multiple of 4 are right-padded with zeros
    before the first convolution.
    """

    def __init__(self, rng, in_dim: int, out_dim: int, kernel: int = 3):
        if kernel % 2 == 0:
            raise ValueError(f"audio front-end kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.conv1_kernel = parameter(rng, (kernel, in_dim, out_dim), fan_in=kernel * in_dim)
        self.conv1_bias = parameter(rng, (out_dim,), fan_in=kernel * in_dim)
        self.conv2_kernel = parameter(rng, (kernel, out_dim, out_dim), fan_in=kernel * out_dim)
        self.conv2_bias = parameter(rng, (out_dim,), fan_in=kernel * out_dim)

    def __call__(self, spectro: np.ndarray) -> Tensor:
        s = spectro.shape[0]
        if s % 4 != 0:
            padded = np.zeros((s + (4 - s % 4), spectro.shape[1]))
            padded[:s] = spectro
            spectro = padded
        pad = (self.kernel - 1) // 2
        h = relu(conv1d(Tensor(spectro), self.conv1_kernel, self.conv1_bias, stride=2, padding=pad))
        return relu(conv1d(h, self.conv2_kernel, self.conv2_bias, stride=2, padding=pad))

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.conv1.kernel": self.conv1_kernel,
                f"{prefix}.conv1.bias": self.conv1_bias,
                f"{prefix}.conv2.kernel": self.conv2_kernel,
                f"{prefix}.conv2.bias": self.conv2_bias}
