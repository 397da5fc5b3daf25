"""Building blocks shared by the generator sub-networks."""

from __future__ import annotations

import numpy as np

from .engine import Conv2d, Module, Parameter, Tensor, leaky_relu, relu


def sn_conv(in_c: int, out_c: int, rng: np.random.Generator, stride: int = 1,
            kernel: int = 3, bias: bool = True) -> Conv2d:
    """Generator convolution; always reads its weight through spectral normalization."""
    return Conv2d(in_c, out_c, kernel, stride, rng=rng, bias=bias, spectral=True)


class DownBlock(Module):
    """Stride-2 convolution followed by leaky ReLU."""

    def __init__(self, in_c: int, out_c: int, rng: np.random.Generator):
        self.conv = sn_conv(in_c, out_c, rng, stride=2)

    def forward(self, x: Tensor) -> Tensor:
        return leaky_relu(self.conv(x), 0.2)


class ConvRelu(Module):
    def __init__(self, in_c: int, out_c: int, rng: np.random.Generator):
        self.conv = sn_conv(in_c, out_c, rng)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.conv(x))


class ScaledHead(Module):
    """Spectrally normalized conv whose output is multiplied by a learnable gain.

    Spectral normalization rescales any nonzero weight to unit norm, so a head
    that must start near zero gets its small initial output from ``gain``.
    """

    def __init__(self, in_c: int, out_c: int, rng: np.random.Generator, gain: float):
        self.conv = sn_conv(in_c, out_c, rng, bias=False)
        self.gain = Parameter(np.full((1, 1, 1, 1), gain))

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x) * self.gain
