"""Local reenactment of eyes, nose and mouth with four independent U-Nets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import Module, Tensor, concat, stack_batch, tanh, upsample_nearest
from .geometry import REGIONS, RegionSpec, crop_with_frame, place_region, region_frame, region_heatmaps
from .layers import ConvRelu, DownBlock, sn_conv


class RegionUNet(Module):
    """Three stride-2 down blocks, three upsample+concat blocks, tanh head."""

    def __init__(self, in_channels: int, rng: np.random.Generator, widths=(32, 64, 128)):
        w1, w2, w3 = widths
        self.down = [DownBlock(in_channels, w1, rng), DownBlock(w1, w2, rng), DownBlock(w2, w3, rng)]
        self.up = [ConvRelu(w3 + w2, w2, rng), ConvRelu(w2 + w1, w1, rng),
                   ConvRelu(w1 + in_channels, w1, rng)]
        self.head = sn_conv(w1, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        skips = [x]
        h = x
        for block in self.down:
            h = block(h)
            skips.append(h)
        skips = skips[:-1][::-1]
        for block, skip in zip(self.up, skips):
            h = block(concat([upsample_nearest(h, 2), skip], axis=1))
        return tanh(self.head(h))


@dataclass
class LocalReenactment:
    region: str
    crop: Tensor  # (n, 3, crop_h, crop_w)
    placements: list  # one SimilarityTransform per batch element (driving frame)


class LocalNet(Module):
    """Holds one :class:`RegionUNet` per facial region."""

    def __init__(self, rng: np.random.Generator, regions: Sequence[RegionSpec] = REGIONS,
                 widths=(32, 64, 128)):
        self.regions = tuple(regions)
        self.nets = {r.name: RegionUNet(3 + 2 * len(r.indices), rng, widths) for r in self.regions}

    def reenact(self, source_image: Tensor, source_landmarks: Sequence, driving_landmarks: Sequence,
                region: RegionSpec) -> LocalReenactment:
        """Reenact one region for every batch element."""
        inputs, placements = [], []
        for i, (src_lm, drv_lm) in enumerate(zip(source_landmarks, driving_landmarks)):
            src_frame = region_frame(src_lm, region)
            drv_frame = region_frame(drv_lm, region)
            crop = crop_with_frame(source_image[i:i + 1], src_frame, region.crop_size)
            heat = np.concatenate([region_heatmaps(src_lm, region, src_frame),
                                   region_heatmaps(drv_lm, region, drv_frame)])[None]
            inputs.append(concat([crop, Tensor(heat.astype(crop.dtype))], axis=1))
            placements.append(drv_frame)
        out = self.nets[region.name](stack_batch(inputs))
        return LocalReenactment(region.name, out, placements)

    def forward(self, source_image: Tensor, source_landmarks, driving_landmarks) -> list:
        return [self.reenact(source_image, source_landmarks, driving_landmarks, r) for r in self.regions]


def local_reenact(net: LocalNet, source_image: Tensor, source_landmarks, driving_landmarks,
                  region: RegionSpec) -> LocalReenactment:
    return net.reenact(source_image, source_landmarks, driving_landmarks, region)


def place_all(locals_: Sequence[LocalReenactment], canvas_h: int, canvas_w: int) -> Tensor:
    """Composite the reenacted crops into ``(n, 4, h, w)``: 3 colour channels + coverage mask.

    Later regions overwrite earlier ones where they overlap (eyes, nose, mouth
    order).
    """
    per_sample = []
    n = locals_[0].crop.shape[0] if locals_ else 0
    for i in range(n):
        colour = None
        union = np.zeros((1, 1, canvas_h, canvas_w), dtype=locals_[0].crop.dtype)
        for loc in locals_:
            canvas, mask = place_region(canvas_h, canvas_w, loc.crop[i:i + 1], loc.placements[i])
            colour = canvas if colour is None else colour * (1.0 - mask) + canvas
            union = np.maximum(union, mask)
        per_sample.append(concat([colour, Tensor(union)], axis=1))
    return stack_batch(per_sample)


def empty_composite(n: int, h: int, w: int, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros((n, 4, h, w), dtype=dtype))
