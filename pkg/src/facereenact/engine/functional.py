"""Image-shaped primitives: convolution, resampling, sub-pixel shuffling and
the channel normalization used by the adaptive fusion blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, _make, as_tensor, mean, sqrt

NORM_EPS = 1e-5


# ---------------------------------------------------------------- convolution
def _im2col(xp: np.ndarray, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    view = as_strided(xp, shape=(c, k, k, n, oh, ow),
                      strides=(sc, sh, sw, sn, sh * stride, sw * stride), writeable=False)
    return np.ascontiguousarray(view).reshape(c * k * k, n * oh * ow)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over an ``(n, c, h, w)`` input.

    ``weight`` is ``(out_c, in_c, k, k)``; output extent follows
    ``(h + 2p - k) // stride + 1``.
    """
    x = as_tensor(x)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d weight must be (out_c, in_c, k, k), got {weight.shape}")
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape} vs weight {weight.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride={stride} / padding={padding}")
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d input {x.shape} too small for kernel {weight.shape}")
    xd = x.data
    if weight.dtype != xd.dtype:
        xd = xd.astype(np.result_type(xd.dtype, weight.dtype))
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = _im2col(xp, k, stride, oh, ow)
    w2 = weight.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, oh, ow).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c, k, k, n, oh, ow)
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                        dcols[:, i, j].transpose(1, 0, 2, 3)
            gx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw, gb

    return _make(out, parents, bw)


# -------------------------------------------------------------- pixel shuffle
def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """``(n, c*r*r, h, w) -> (n, c, h*r, w*r)`` sub-pixel rearrangement."""
    n, cr, h, w = x.shape
    if r < 1 or cr % (r * r):
        raise ValueError(f"pixel_shuffle: {cr} channels not divisible by r^2={r * r}")
    c = cr // (r * r)
    out = x.data.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)
    return _make(out, (x,), lambda g: (_unshuffle(g, r),))


def _unshuffle(a: np.ndarray, r: int) -> np.ndarray:
    n, c, hr, wr = a.shape
    h, w = hr // r, wr // r
    return a.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    n, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise ValueError(f"pixel_unshuffle: spatial {hr}x{wr} not divisible by {r}")
    out = _unshuffle(x.data, r)
    return _make(out, (x,), lambda g: (
        g.reshape(n, c, r, r, hr // r, wr // r).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, hr, wr),))


# ---------------------------------------------------------------- resampling
def _interp_matrix(n_out: int, n_in: int, dtype) -> np.ndarray:
    """Align-corners linear interpolation weights, shape ``(n_out, n_in)``."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    if n_out == 1:
        pos = np.zeros(1)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    m[rows, lo] += 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize; same-size resize is the identity."""
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize needs positive extents, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return _make(x.data.copy(), (x,), lambda g: (g,))
    ry = _interp_matrix(out_h, h, x.dtype)
    rx = _interp_matrix(out_w, w, x.dtype)
    out = np.einsum("ph,nchw,qw->ncpq", ry, x.data, rx, optimize=True)
    return _make(out, (x,), lambda g: (np.einsum("ph,ncpq,qw->nchw", ry, g, rx, optimize=True),))


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return _make(out, (x,), lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),))


def avg_pool2d(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    out = x.data.reshape(n, c, ho, factor, wo, factor).mean(axis=(3, 5))
    inv = 1.0 / (factor * factor)

    def bw(g):
        return (np.repeat(np.repeat(g * inv, factor, axis=2), factor, axis=3),)

    return _make(out, (x,), bw)


def _bilinear_setup(xs: np.ndarray, ys: np.ndarray, h: int, w: int, padding: str):
    """Corner indices and weights for sampling at pixel coords ``(xs, ys)``.

    Returns ``(idx, wts, dwx, dwy)`` each a list of four ``(n, H, W)`` arrays:
    flat corner index into ``h*w``, bilinear weight, and the weight's partial
    derivatives with respect to x and y (zero where the coordinate is clamped).
    """
    if padding == "border":
        in_x = (xs >= 0) & (xs <= w - 1)
        in_y = (ys >= 0) & (ys <= h - 1)
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    if padding == "border":
        x0 = np.clip(x0, 0, max(w - 2, 0))
        y0 = np.clip(y0, 0, max(h - 2, 0))
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1) if padding == "border" else x0 + 1
    y1 = np.minimum(y0 + 1, h - 1) if padding == "border" else y0 + 1
    corners = [(x0, y0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)),
               (x1, y0, fx * (1 - fy), (1 - fy), -fx),
               (x0, y1, (1 - fx) * fy, -fy, (1 - fx)),
               (x1, y1, fx * fy, fy, fx)]
    idx, wts, dwx, dwy = [], [], [], []
    for cx, cy, wt, dx, dy in corners:
        if padding == "zeros":
            valid = (cx >= 0) & (cx <= w - 1) & (cy >= 0) & (cy <= h - 1)
            wt, dx, dy = wt * valid, dx * valid, dy * valid
            cx = np.clip(cx, 0, w - 1)
            cy = np.clip(cy, 0, h - 1)
        else:
            dx = dx * in_x
            dy = dy * in_y
        idx.append(cy * w + cx)
        wts.append(wt)
        dwx.append(dx)
        dwy.append(dy)
    return idx, wts, dwx, dwy


def _gather(data: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, h, w = data.shape
    flat = data.reshape(n, c, h * w)
    return np.take_along_axis(flat, idx.reshape(n, 1, -1), axis=2).reshape(n, c, *idx.shape[1:])


def _scatter(g: np.ndarray, idx: np.ndarray, hw: int) -> np.ndarray:
    n, c = g.shape[:2]
    offs = (np.arange(n * c).reshape(n, c, 1) * hw + idx.reshape(n, 1, -1)).ravel()
    return np.bincount(offs, weights=g.reshape(-1), minlength=n * c * hw).reshape(n, c, hw)


def sample_bilinear(x: Tensor, xs, ys, padding: str = "border") -> Tensor:
    """Bilinearly sample ``x`` at pixel coordinates.

    ``xs``/``ys`` are ``(n, H, W)`` arrays or tensors of column/row positions;
    gradients flow to ``x`` and to coordinate tensors. ``padding`` is
    ``"border"`` (clamp) or ``"zeros"``.
    """
    x = as_tensor(x)
    xs_t = xs if isinstance(xs, Tensor) else None
    ys_t = ys if isinstance(ys, Tensor) else None
    xs_a = xs.data if xs_t is not None else np.asarray(xs)
    ys_a = ys.data if ys_t is not None else np.asarray(ys)
    n, c, h, w = x.shape
    xs_a = np.broadcast_to(xs_a, (n,) + xs_a.shape[-2:]).astype(x.dtype)
    ys_a = np.broadcast_to(ys_a, (n,) + ys_a.shape[-2:]).astype(x.dtype)
    idx, wts, dwx, dwy = _bilinear_setup(xs_a, ys_a, h, w, padding)
    gathered = [_gather(x.data, i) for i in idx]
    out = sum(v * wt[:, None] for v, wt in zip(gathered, wts))
    out = out.astype(x.dtype, copy=False)
    parents = [x]
    if xs_t is not None:
        parents.append(xs_t)
    if ys_t is not None:
        parents.append(ys_t)

    def bw(g):
        grads = []
        if x.requires_grad:
            acc = sum(_scatter(g * wt[:, None], i, h * w) for i, wt in zip(idx, wts))
            grads.append(acc.reshape(n, c, h, w).astype(x.dtype))
        else:
            grads.append(None)
        if xs_t is not None:
            gx = sum((g * v).sum(axis=1) * d for v, d in zip(gathered, dwx))
            grads.append(gx.reshape(xs_t.shape) if xs_t.requires_grad else None)
        if ys_t is not None:
            gy = sum((g * v).sum(axis=1) * d for v, d in zip(gathered, dwy))
            grads.append(gy.reshape(ys_t.shape) if ys_t.requires_grad else None)
        return tuple(grads)

    return _make(out, parents, bw)


def grid_sample(x: Tensor, flow: Tensor) -> Tensor:
    """Backward-warp ``x`` by a displacement field.

    ``flow`` is ``(n, 2, h, w)`` in normalized units (x then y); output pixel
    ``p`` reads ``x`` at ``p + flow(p)`` where ``[-1, 1]`` spans each axis
    corner to corner. Out-of-range locations clamp to the border.
    """
    x = as_tensor(x)
    flow = as_tensor(flow)
    n, c, h, w = x.shape
    if flow.ndim != 4 or flow.shape[0] != n or flow.shape[1] != 2 or flow.shape[2:] != (h, w):
        raise ValueError(f"grid_sample: flow {flow.shape} incompatible with input {x.shape}")
    sx = (w - 1) / 2.0
    sy = (h - 1) / 2.0
    gy, gx = np.meshgrid(np.arange(h, dtype=x.dtype), np.arange(w, dtype=x.dtype), indexing="ij")
    xs = flow[:, 0] * sx + gx
    ys = flow[:, 1] * sy + gy
    return sample_bilinear(x, xs, ys, padding="border")


# ------------------------------------------------------- adaptive normalization
@dataclass
class ChannelStats:
    """Per-channel mean and standard deviation, each shaped ``(1, c, 1, 1)``."""

    mean: Tensor
    std: Tensor


def channel_stats(x: Tensor, eps: float = NORM_EPS) -> ChannelStats:
    """Mean/std per channel, pooled over batch and spatial positions.

    Variance is evaluated in two passes, which equals ``E[x^2] - mean^2``
    but does not cancel catastrophically in 32-bit.
    """
    x = as_tensor(x)
    if x.size == 0:
        raise ValueError("channel_stats on an empty tensor")
    mu = mean(x, axis=(0, 2, 3), keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=(0, 2, 3), keepdims=True)
    return ChannelStats(mean=mu, std=sqrt(var + eps))


def normalize(x: Tensor, stats: ChannelStats) -> Tensor:
    return (x - stats.mean) / stats.std


def adaptive_denormalize(x: Tensor, stats: ChannelStats, gamma: Tensor, beta: Tensor) -> Tensor:
    """``gamma * (x - mean) / std + beta`` with element-wise ``gamma``/``beta``."""
    x = as_tensor(x)
    for label, t in (("gamma", gamma), ("beta", beta)):
        if t.ndim != 4 or t.shape[1:] != x.shape[1:] or t.shape[0] not in (1, x.shape[0]):
            raise ValueError(f"adaptive_denormalize: {label} {t.shape} does not match input {x.shape}")
    return gamma * normalize(x, stats) + beta
