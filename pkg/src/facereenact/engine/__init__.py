"""Minimal reverse-mode differentiation engine on top of numpy."""

from .functional import (
    NORM_EPS,
    ChannelStats,
    adaptive_denormalize,
    avg_pool2d,
    bilinear_resize,
    channel_stats,
    conv2d,
    grid_sample,
    normalize,
    pixel_shuffle,
    pixel_unshuffle,
    sample_bilinear,
    upsample_nearest,
)
from .nn import (
    Adam,
    Conv2d,
    Module,
    Parameter,
    adam_step,
    frozen,
    set_power_iters,
    spectral_normalize,
)
from .tensor import (
    Tensor,
    abs_,
    add,
    as_tensor,
    astype,
    backward,
    clamp_min,
    concat,
    div,
    exp,
    leaky_relu,
    log,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    sqrt,
    square,
    stack_batch,
    sub,
    sum_,
    tanh,
    where,
)

__all__ = [name for name in dir() if not name.startswith("_")]
