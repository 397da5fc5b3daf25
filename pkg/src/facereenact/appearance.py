"""Appearance extractor: one skip-connected encoder-decoder pass that predicts
every fusion block's modulation parameters together with the appearance
feature that the flow later warps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Module, Parameter, Tensor, as_tensor, concat, upsample_nearest
from .layers import ConvRelu, DownBlock, sn_conv


@dataclass
class AdaptiveParams:
    """Ordered ``(gamma_i, beta_i)`` pairs, one per fusion block."""

    entries: list

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def shapes(self) -> list:
        return [tuple(g.shape[1:]) for g, _ in self.entries]


class ModulationHead(Module):
    """3x3 conv emitting ``(gamma, beta)``; starts at ``gamma = 1``, ``beta = 0``.

    The conv output is scaled by a small learnable gain (see
    :class:`layers.ScaledHead`) and added to per-channel biases initialised at
    1 for gamma and 0 for beta.
    """

    def __init__(self, in_c: int, channels: int, rng: np.random.Generator, gain: float = 1e-2):
        self.channels = channels
        self.conv = sn_conv(in_c, 2 * channels, rng, bias=False)
        self.gain = Parameter(np.full((1, 1, 1, 1), gain))
        self.gamma_bias = Parameter(np.ones((1, channels, 1, 1)))
        self.beta_bias = Parameter(np.zeros((1, channels, 1, 1)))

    def forward(self, x: Tensor):
        raw = self.conv(x) * self.gain
        c = self.channels
        return raw[:, :c] + self.gamma_bias, raw[:, c:] + self.beta_bias


class AppearanceExtractor(Module):
    """U-Net over the source image.

    Encoder: three stride-2 stages (to 1/8). Decoder: three upsample + skip
    concat stages at 1/4, 1/2 and full resolution; each emits one
    ``(gamma, beta)`` pair. The 1/4 decoder feature doubles as the appearance
    feature.
    """

    def __init__(self, rng: np.random.Generator, theta_channels=(128, 64, 32),
                 widths=(32, 64, 128), feature_channels: int = 128, head_gain: float = 1e-2):
        w1, w2, w3 = widths
        d1, d2, d3 = feature_channels, max(theta_channels[1], w2), max(theta_channels[2], w1)
        self.theta_channels = tuple(theta_channels)
        self.down = [DownBlock(3, w1, rng), DownBlock(w1, w2, rng), DownBlock(w2, w3, rng)]
        self.up = [ConvRelu(w3 + w2, d1, rng), ConvRelu(d1 + w1, d2, rng), ConvRelu(d2 + 3, d3, rng)]
        self.heads = [ModulationHead(d, c, rng, head_gain) for d, c in zip((d1, d2, d3), theta_channels)]

    def forward(self, image) -> tuple:
        x = as_tensor(image)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"appearance extractor expects (n, 3, h, w) images, got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ValueError(f"image extents must be divisible by 8, got {x.shape[2:]}")
        lo, hi = float(x.data.min()), float(x.data.max())
        if lo < -1.0 - 1e-4 or hi > 1.0 + 1e-4:
            raise ValueError(f"source image must lie in [-1, 1], got range [{lo:.3f}, {hi:.3f}]")
        skips = [x]
        h = x
        for block in self.down:
            h = block(h)
            skips.append(h)
        skips = skips[:-1][::-1]
        entries = []
        feature = None
        for block, head, skip in zip(self.up, self.heads, skips):
            h = block(concat([upsample_nearest(h, 2), skip], axis=1))
            if feature is None:
                feature = h
            entries.append(head(h))
        return AdaptiveParams(entries), feature


def extract(net: AppearanceExtractor, source_image) -> tuple:
    return net(source_image)
