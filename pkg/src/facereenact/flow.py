"""Flow estimation: an hourglass net from stacked landmark heatmaps to a dense
backward-warping field, and the feature warp that consumes it."""

from __future__ import annotations

import logging

import numpy as np

from .engine import Module, Tensor, as_tensor, bilinear_resize, concat, grid_sample, upsample_nearest
from .geometry import N_LANDMARKS
from .layers import ConvRelu, DownBlock, ScaledHead

log = logging.getLogger(__name__)

FLOW_SOFT_LIMIT = 2.0


class FlowEstimator(Module):
    """Hourglass: four stride-2 stages down to 1/16, four mirrored up stages with
    additive skips, and a near-zero flow head."""

    def __init__(self, rng: np.random.Generator, widths=(64, 128, 256, 256), out_width: int = 32,
                 head_gain: float = 1e-3, in_channels: int = 2 * N_LANDMARKS):
        w1, w2, w3, w4 = widths
        self.down = [DownBlock(in_channels, w1, rng), DownBlock(w1, w2, rng),
                     DownBlock(w2, w3, rng), DownBlock(w3, w4, rng)]
        self.up = [ConvRelu(w4, w3, rng), ConvRelu(w3, w2, rng),
                   ConvRelu(w2, w1, rng), ConvRelu(w1, out_width, rng)]
        self.head = ScaledHead(out_width, 2, rng, gain=head_gain)

    def forward(self, source_heatmap, driving_heatmap) -> Tensor:
        s = as_tensor(source_heatmap)
        d = as_tensor(driving_heatmap)
        if s.shape != d.shape:
            raise ValueError(f"heatmap mismatch: source {s.shape} vs driving {d.shape}")
        h, w = s.shape[2:]
        if h % 16 or w % 16:
            raise ValueError(f"flow estimator needs spatial extents divisible by 16, got {h}x{w}")
        x = concat([s, d], axis=1)
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
        skips = skips[:-1][::-1]
        for i, block in enumerate(self.up):
            x = block(upsample_nearest(x, 2))
            if i < len(skips):
                x = x + skips[i]
        flow = self.head(x)
        peak = float(np.abs(flow.data).max()) if flow.size else 0.0
        if peak > FLOW_SOFT_LIMIT:
            log.warning("flow magnitude %.2f exceeds soft range %.1f", peak, FLOW_SOFT_LIMIT)
        return flow


def warp_feature(feature: Tensor, flow: Tensor) -> Tensor:
    """Resize ``flow`` to the feature's spatial size, then backward-warp the feature."""
    h, w = feature.shape[2:]
    return grid_sample(feature, bilinear_resize(flow, h, w))
