"""Independent reference implementations and a finite-difference checker.

The oracles are deliberately naive (explicit loops) and share no code with the
package.
"""

from __future__ import annotations

import math

import numpy as np

from facereenact.engine import Tensor, backward


# ------------------------------------------------------------------ oracles
def conv2d_loops(x, w, b=None, stride=1, padding=0):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[ni, ci, i * stride + di, j * stride + dj] * w[oi, ci, di, dj]
                    out[ni, oi, i, j] = acc + (b[oi] if b is not None else 0.0)
    return out


def channel_stats_two_pass(x, eps=1e-5):
    n, c, h, w = x.shape
    means, stds = [], []
    for ci in range(c):
        vals = [float(v) for v in x[:, ci].ravel()]
        m = sum(vals) / len(vals)
        var = sum((v - m) ** 2 for v in vals) / len(vals)
        means.append(m)
        stds.append(math.sqrt(var + eps))
    return np.array(means), np.array(stds)


def bilinear_at(img, x, y):
    """Border-clamped bilinear lookup of a 2-D array at pixel coordinate (x, y)."""
    h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x1]
            + (1 - fx) * fy * img[y1, x0] + fx * fy * img[y1, x1])


def grid_sample_loops(x, flow):
    """Normalized displacement warp evaluated one output pixel at a time."""
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for ni in range(n):
        for i in range(h):
            for j in range(w):
                px = j + flow[ni, 0, i, j] * (w - 1) / 2.0
                py = i + flow[ni, 1, i, j] * (h - 1) / 2.0
                for ci in range(c):
                    out[ni, ci, i, j] = bilinear_at(x[ni, ci], px, py)
    return out


# ------------------------------------------------------- gradient checking
def gradcheck(fn, inputs, n_probes=20, step=1e-3, rng=None, tol=1e-3, floor=1e-6):
    """Compare analytic gradients of ``sum(fn(*tensors) * R)`` against central
    differences at random coordinates of every input; returns the worst relative
    error. Inputs are cast to float64."""
    rng = rng if rng is not None else np.random.default_rng(0)
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    weights = rng.normal(size=out.shape)

    def scalar(values):
        ts = [Tensor(v) for v in values]
        return float(np.sum(fn(*ts).data.astype(np.float64) * weights))

    backward((out * Tensor(weights)).sum())
    worst = 0.0
    for idx, (arr, t) in enumerate(zip(arrays, tensors)):
        analytic = np.zeros_like(arr) if t.grad is None else t.grad
        flat = rng.choice(arr.size, size=min(n_probes, arr.size), replace=False)
        for f in flat:
            pos = np.unravel_index(f, arr.shape)
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[idx][pos] += step
            minus[idx][pos] -= step
            numeric = (scalar(plus) - scalar(minus)) / (2 * step)
            a = float(analytic[pos])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if abs(a - numeric) < floor:
                err = 0.0
            worst = max(worst, err)
    return worst


def param_gradcheck(module, fn, n_probes=20, step=1e-6, rng=None, floor=1e-7):
    """Finite-difference check of ``sum(fn() * R)`` w.r.t. randomly probed
    parameter coordinates of ``module`` (float64, parameters perturbed in place)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    params = [p for p in module.parameters() if p.requires_grad]
    out = fn()
    weights = rng.normal(size=out.shape)
    for p in params:
        p.grad = None
    backward((out * Tensor(weights)).sum())
    sizes = np.array([p.size for p in params])
    worst = 0.0
    for _ in range(n_probes):
        pi = rng.choice(len(params), p=sizes / sizes.sum())
        p = params[pi]
        pos = np.unravel_index(rng.integers(p.size), p.shape)
        analytic = 0.0 if p.grad is None else float(p.grad[pos])
        orig = p.data[pos]
        p.data[pos] = orig + step
        fp = float(np.sum(fn().data * weights))
        p.data[pos] = orig - step
        fm = float(np.sum(fn().data * weights))
        p.data[pos] = orig
        numeric = (fp - fm) / (2 * step)
        diff = abs(analytic - numeric)
        if diff >= floor:
            worst = max(worst, diff / max(abs(analytic), abs(numeric)))
    for p in params:
        p.grad = None
    return worst


def smooth_image(h, w, seed=0, channels=3):
    """Band-limited test image: a few low-frequency sinusoids."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((channels, h, w))
    for c in range(channels):
        for _ in range(3):
            fx, fy = rng.uniform(0.02, 0.08, size=2)
            ph = rng.uniform(0, 2 * np.pi)
            img[c] += np.sin(2 * np.pi * (fx * xx + fy * yy) + ph) / 3
    return img


def prepare_for_gradcheck(module, head_gain=None):
    """float64, eval mode, converged power iterations (so treating the singular
    vectors as constants is exact to first order), optional head gain override."""
    from facereenact.engine import Conv2d, spectral_normalize

    module.astype(np.float64)
    for m in module.modules():
        if isinstance(m, Conv2d) and m.spectral:
            spectral_normalize(m.weight, 500, update=True)
    if head_gain is not None:
        for name, p in module.named_parameters():
            if name.endswith("gain"):
                p.data[...] = head_gain
    module.eval()
    return module
