"""Fusion net: appearance-adaptive fusion blocks followed by a residual tail."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (Module, Tensor, adaptive_denormalize, bilinear_resize, channel_stats, concat,
                     pixel_shuffle, relu, tanh)
from .layers import sn_conv

LOCALS_CHANNELS = 4  # 3 colour + coverage mask


@dataclass(frozen=True)
class FusionConfig:
    """``channels[i]`` is block ``i``'s input width; every block but the last
    doubles resolution with a pixel shuffle, so its conv emits
    ``4 * channels[i + 1]`` maps."""

    channels: tuple = (128, 64, 32)
    tail_blocks: int = 2

    def __post_init__(self):
        if len(self.channels) < 1:
            raise ValueError("fusion net needs at least one block")

    @property
    def n_blocks(self) -> int:
        return len(self.channels)

    def conv_out(self, i: int) -> int:
        if i + 1 < self.n_blocks:
            return 4 * self.channels[i + 1]
        return self.channels[i]

    def upsample(self, i: int) -> int:
        return 2 if i + 1 < self.n_blocks else 1


def fusion_block(feature: Tensor, locals_composite: Tensor, gamma: Tensor, beta: Tensor,
                 conv, upsample: int = 2) -> Tensor:
    """Normalize ``feature`` per channel, modulate with ``gamma``/``beta``,
    concatenate the resized local composite, convolve and pixel-shuffle."""
    if gamma.shape[1:] != feature.shape[1:] or beta.shape[1:] != feature.shape[1:]:
        raise ValueError(f"fusion block: gamma {gamma.shape} / beta {beta.shape} "
                         f"do not match feature {feature.shape}")
    if locals_composite.shape[0] != feature.shape[0] or locals_composite.shape[1] != LOCALS_CHANNELS:
        raise ValueError(f"fusion block: locals {locals_composite.shape} vs feature {feature.shape}")
    h, w = feature.shape[2:]
    anchors = bilinear_resize(locals_composite, h, w)
    modulated = adaptive_denormalize(feature, channel_stats(feature), gamma, beta)
    out = relu(conv(concat([modulated, anchors], axis=1)))
    return pixel_shuffle(out, upsample) if upsample > 1 else out


class ResidualBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv1 = sn_conv(channels, channels, rng)
        self.conv2 = sn_conv(channels, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv2(relu(self.conv1(x)))


class FusionNet(Module):
    def __init__(self, rng: np.random.Generator, config: FusionConfig = FusionConfig()):
        self.config = config
        self.convs = [sn_conv(c + LOCALS_CHANNELS, config.conv_out(i), rng)
                      for i, c in enumerate(config.channels)]
        width = config.channels[-1]
        self.tail = [ResidualBlock(width, rng) for _ in range(config.tail_blocks)]
        self.head = sn_conv(width, 3, rng)

    def block(self, i: int, feature: Tensor, locals_composite: Tensor, gamma, beta) -> Tensor:
        return fusion_block(feature, locals_composite, gamma, beta, self.convs[i], self.config.upsample(i))

    def forward(self, warped_feature: Tensor, theta, locals_composite: Tensor) -> Tensor:
        if len(theta) != self.config.n_blocks:
            raise ValueError(f"expected {self.config.n_blocks} (gamma, beta) pairs, got {len(theta)}")
        x = warped_feature
        for i, (gamma, beta) in enumerate(theta):
            x = self.block(i, x, locals_composite, gamma, beta)
        for block in self.tail:
            x = block(x)
        return tanh(self.head(x))
