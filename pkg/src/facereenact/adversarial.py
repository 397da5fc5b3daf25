"""Multi-scale patch discriminators and the loss terms."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import (Conv2d, Module, Tensor, abs_, as_tensor, astype, avg_pool2d, concat, leaky_relu,
                     log, mean, sigmoid)


@dataclass(frozen=True)
class LossWeights:
    lambda_gan: float = 10.0
    lambda_c: float = 5.0
    lambda_local: float = 5.0


# ------------------------------------------------------------- discriminators
class PatchDiscriminator(Module):
    """Three stride-2 convs then a stride-1 logit conv: ``h -> h/8`` logit map."""

    def __init__(self, in_channels: int, rng: np.random.Generator, widths=(64, 128, 256)):
        chans = (in_channels,) + tuple(widths)
        self.convs = [Conv2d(a, b, 3, 2, rng=rng) for a, b in zip(chans[:-1], chans[1:])]
        self.logit = Conv2d(chans[-1], 1, 3, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = leaky_relu(conv(x), 0.2)
        return self.logit(x)


class MultiScaleDiscriminator(Module):
    """Same architecture at full and half resolution, separate weights."""

    def __init__(self, in_channels: int, rng: np.random.Generator, n_scales: int = 2, widths=(64, 128, 256)):
        self.scales = [PatchDiscriminator(in_channels, rng, widths) for _ in range(n_scales)]

    def forward(self, x: Tensor) -> list:
        maps = []
        for i, disc in enumerate(self.scales):
            if i:
                x = avg_pool2d(x, 2)
            maps.append(disc(x))
        return maps


def _check_pair(a, b, label):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"{label}: shape mismatch {a.shape} vs {b.shape}")


def disc_forward_L(disc: MultiScaleDiscriminator, image, driving_heatmap) -> list:
    """Pose-and-expression consistency: image concatenated with the driving heatmaps."""
    image, heat = as_tensor(image), as_tensor(driving_heatmap)
    _check_pair(image, heat, "landmark discriminator")
    return disc(concat([image, heat.astype(image.dtype) if heat.dtype != image.dtype else heat], axis=1))


def disc_forward_I(disc: MultiScaleDiscriminator, source_image, candidate_image) -> list:
    """Appearance consistency: source image concatenated with the candidate."""
    src, cand = as_tensor(source_image), as_tensor(candidate_image)
    _check_pair(src, cand, "identity discriminator")
    return disc(concat([src, cand], axis=1))


# ------------------------------------------------------------------- losses
LOG_FLOOR = 1e-8


def gan_loss(real_maps: Optional[Sequence[Tensor]], fake_maps: Sequence[Tensor], side: str) -> Tensor:
    """Cross-entropy GAN loss summed over scales.

    ``side="discriminator"``: ``-E[log s(real)] - E[log(1 - s(fake))]``;
    ``side="generator"``: non-saturating ``-E[log s(fake)]``.
    """
    if side not in ("generator", "discriminator"):
        raise ValueError(f"side must be 'generator' or 'discriminator', got {side!r}")
    total = None
    if side == "discriminator":
        if real_maps is None or len(real_maps) != len(fake_maps):
            raise ValueError("discriminator loss needs matching real and fake maps")
        for real, fake in zip(real_maps, fake_maps):
            term = -mean(log(sigmoid(real), LOG_FLOOR)) - mean(log(1.0 - sigmoid(fake), LOG_FLOOR))
            total = term if total is None else total + term
    else:
        for fake in fake_maps:
            term = -mean(log(sigmoid(fake), LOG_FLOOR))
            total = term if total is None else total + term
    return total


class PerceptualNet(Module):
    """Frozen random-weight conv feature extractor standing in for VGG features.

    Five 3x3 conv layers (16/32/64/128/128 channels, strides 1/2/2/2/1) with
    leaky ReLU; every layer is a tap. Weights depend only on ``seed`` unless
    loaded from a named-tensor file.
    """

    def __init__(self, seed: int = 1234, channels=(16, 32, 64, 128, 128), strides=(1, 2, 2, 2, 1),
                 taps: Optional[Sequence[int]] = None, weights_path: Optional[str] = None):
        rng = np.random.default_rng([seed, 0x9E7])
        chans = (3,) + tuple(channels)
        self.seed = seed
        self.convs = [Conv2d(a, b, 3, s, rng=rng, trainable=False)
                      for a, b, s in zip(chans[:-1], chans[1:], strides)]
        self.taps = tuple(range(len(channels))) if taps is None else tuple(taps)
        if weights_path is not None:
            self.load_weights(weights_path)

    def load_weights(self, path) -> None:
        from .pipeline.checkpoint import read_tensors

        table = read_tensors(Path(path))
        for name, param in self.named_parameters():
            if name not in table:
                raise KeyError(f"{path}: missing perceptual weight {name!r}")
            arr = table[name]
            if arr.shape != param.shape:
                raise ValueError(f"{path}: {name} has shape {arr.shape}, expected {param.shape}")
            param.data = arr.astype(param.dtype)

    def features(self, x: Tensor) -> list:
        feats = []
        for i, conv in enumerate(self.convs):
            x = leaky_relu(conv(x), 0.2)
            if i in self.taps:
                feats.append(x)
        return feats


def l1(a, b) -> Tensor:
    return mean(abs_(as_tensor(a) - as_tensor(b)))


def perceptual_loss(a, b, net: PerceptualNet) -> Tensor:
    """Sum over tap layers of the mean absolute feature difference."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"perceptual loss: shape mismatch {a.shape} vs {b.shape}")
    total = Tensor(np.zeros((), dtype=a.dtype))
    for fa, fb in zip(net.features(a), net.features(b)):
        total = total + l1(fa, fb)
    return total


def content_loss(generated, target, net: PerceptualNet) -> Tensor:
    return l1(generated, target) + perceptual_loss(generated, target, net)


def local_loss(generated_locals: Sequence, target_locals: Sequence, net: PerceptualNet) -> Tensor:
    """Sum of per-region perceptual losses."""
    if len(generated_locals) != len(target_locals):
        raise ValueError("local loss needs one target crop per generated crop")
    total = None
    for g, t in zip(generated_locals, target_locals):
        term = perceptual_loss(g, t, net)
        total = term if total is None else total + term
    return total


def total_loss(gan, content, local, weights: LossWeights = LossWeights()):
    """Weighted sum; tensor inputs are combined in 64-bit so the reported total
    matches the scalar arithmetic on the reported terms exactly."""
    if isinstance(gan, Tensor) or isinstance(content, Tensor) or isinstance(local, Tensor):
        gan, content, local = (astype(as_tensor(t), np.float64) for t in (gan, content, local))
    return weights.lambda_gan * gan + weights.lambda_c * content + weights.lambda_local * local
