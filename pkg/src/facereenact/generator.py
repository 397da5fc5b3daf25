"""The full generator: flow estimation, local nets, appearance extractor and
fusion net wired together."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .appearance import AdaptiveParams, AppearanceExtractor
from .engine import Module, Tensor, as_tensor
from .flow import FlowEstimator, warp_feature
from .fusion import FusionConfig, FusionNet
from .geometry import HEATMAP_VARIANCE, adapt_landmark_shape, rasterize_heatmaps, regions_for
from .localnet import LocalNet, empty_composite, place_all


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int = 64
    flow_widths: tuple = (64, 128, 256, 256)
    flow_out_width: int = 32
    local_widths: tuple = (32, 64, 128)
    appearance_widths: tuple = (32, 64, 128)
    feature_channels: int = 128
    fusion_channels: tuple = (128, 64, 32)
    tail_blocks: int = 2
    use_local_net: bool = True
    heatmap_variance: float = HEATMAP_VARIANCE

    def __post_init__(self):
        if self.resolution % 16:
            raise ValueError(f"resolution must be a multiple of 16, got {self.resolution}")
        if self.fusion_channels[0] != self.feature_channels:
            raise ValueError("the first fusion block consumes the appearance feature directly; "
                             "fusion_channels[0] must equal feature_channels")
        if len(self.fusion_channels) != 3:
            raise ValueError("the appearance extractor emits three (gamma, beta) pairs")


@dataclass
class GeneratorOutput:
    image: Tensor
    flow: Tensor
    theta: AdaptiveParams
    feature: Tensor
    warped_feature: Tensor
    composite: Tensor
    locals: Optional[list] = None
    source_heatmaps: Optional[np.ndarray] = field(default=None, repr=False)
    driving_heatmaps: Optional[np.ndarray] = field(default=None, repr=False)


def heatmap_batch(landmarks_list: Sequence, resolution: int, variance: float = HEATMAP_VARIANCE) -> np.ndarray:
    return np.stack([rasterize_heatmaps(lm, resolution, resolution, variance) for lm in landmarks_list])


def adapt_driving(driving_landmarks: Sequence, source_landmarks: Sequence) -> list:
    return [adapt_landmark_shape(d, s) for d, s in zip(driving_landmarks, source_landmarks)]


class Generator(Module):
    def __init__(self, config: GeneratorConfig = GeneratorConfig(), seed: int = 0):
        self.config = config
        self.regions = regions_for(config.resolution)
        self.flow_net = FlowEstimator(np.random.default_rng([seed, 1]), config.flow_widths, config.flow_out_width)
        self.local_net = LocalNet(np.random.default_rng([seed, 2]), self.regions, config.local_widths)
        self.appearance = AppearanceExtractor(np.random.default_rng([seed, 3]), config.fusion_channels,
                                              config.appearance_widths, config.feature_channels)
        self.fusion = FusionNet(np.random.default_rng([seed, 4]),
                                FusionConfig(tuple(config.fusion_channels), config.tail_blocks))

    def subnets(self) -> dict:
        nets = {"flow": self.flow_net, "appearance": self.appearance, "fusion": self.fusion}
        if self.config.use_local_net:
            nets["local"] = self.local_net
        return nets

    def trainable_parameters(self) -> list:
        return [p for net in self.subnets().values() for p in net.parameters()]

    def forward(self, source_image, source_landmarks: Sequence, driving_landmarks: Sequence) -> GeneratorOutput:
        """Reenact ``source_image`` to the (already shape-adapted) driving landmarks."""
        src = as_tensor(source_image)
        n, _, h, w = src.shape
        if len(source_landmarks) != n or len(driving_landmarks) != n:
            raise ValueError("need one source and one driving landmark set per batch element")
        var = self.config.heatmap_variance
        s_heat = heatmap_batch(source_landmarks, h, var).astype(src.dtype)
        d_heat = heatmap_batch(driving_landmarks, h, var).astype(src.dtype)
        flow = self.flow_net(Tensor(s_heat), Tensor(d_heat))
        theta, feature = self.appearance(src)
        warped = warp_feature(feature, flow)
        locals_: Optional[list] = None
        if self.config.use_local_net:
            locals_ = self.local_net(src, source_landmarks, driving_landmarks)
            composite = place_all(locals_, h, w)
        else:
            composite = empty_composite(n, h, w, src.dtype)
        image = self.fusion(warped, theta, composite)
        return GeneratorOutput(image, flow, theta, feature, warped, composite, locals_, s_heat, d_heat)
