"""Landmark geometry: heatmaps, facial-region frames, similarity transforms and
the statistical driving-shape adaptation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import Tensor, sample_bilinear, stack_batch

N_LANDMARKS = 68
HEATMAP_VARIANCE = 3.0


class LandmarkFormatError(ValueError):
    """A landmark file that is not exactly 68 lines of ``x y``."""


def check_landmarks(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise ValueError(f"expected {N_LANDMARKS}x2 landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("landmarks contain non-finite coordinates")
    return pts


def read_landmarks(path) -> np.ndarray:
    """Parse a landmark text file: one ``x y`` pair per line, 68 lines."""
    lines = Path(path).read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != N_LANDMARKS:
        raise LandmarkFormatError(f"{path}: expected {N_LANDMARKS} lines, found {len(lines)}")
    pts = []
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if len(fields) != 2:
            raise LandmarkFormatError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            x, y = float(fields[0]), float(fields[1])
        except ValueError:
            raise LandmarkFormatError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise LandmarkFormatError(f"{path}:{lineno}: non-finite coordinate")
        pts.append((x, y))
    return np.array(pts)


def write_landmarks(path, points) -> None:
    pts = check_landmarks(points)
    Path(path).write_text("".join(f"{x:.6f} {y:.6f}\n" for x, y in pts))


# ------------------------------------------------------------------ heatmaps
def gaussian_at(px: np.ndarray, py: np.ndarray, points: np.ndarray,
                variance: float = HEATMAP_VARIANCE) -> np.ndarray:
    """Peak-1 Gaussians of each point evaluated at pixel positions ``(px, py)``.

    ``px``/``py`` are broadcastable coordinate grids; output has a leading
    axis over points.
    """
    pts = np.asarray(points, dtype=np.float64)
    dx = px[None] - pts[:, 0].reshape(-1, *([1] * px.ndim))
    dy = py[None] - pts[:, 1].reshape(-1, *([1] * py.ndim))
    return np.exp(-(dx * dx + dy * dy) / (2.0 * variance))


def _flush_subnormal(a: np.ndarray) -> np.ndarray:
    """Zero values below the float32 normal range (subnormals stall BLAS)."""
    a = a.astype(np.float32)
    a[a < np.finfo(np.float32).tiny] = 0.0
    return a


def rasterize_heatmaps(landmarks, h: int, w: int, variance: float = HEATMAP_VARIANCE) -> np.ndarray:
    """``(68, h, w)`` stack of unnormalized Gaussians, one channel per landmark."""
    if h < 1 or w < 1:
        raise ValueError(f"heatmap extents must be positive, got {h}x{w}")
    pts = check_landmarks(landmarks)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return _flush_subnormal(gaussian_at(xs, ys, pts, variance))


# ------------------------------------------------------------------- regions
@dataclass(frozen=True)
class RegionSpec:
    name: str
    indices: tuple
    crop_size: tuple  # (h, w)

    def scaled(self, resolution: int, base: int = 64) -> "RegionSpec":
        """Crop size scaled linearly, rounded to a multiple of 8 (the U-Nets
        downsample three times)."""
        f = resolution / base
        h, w = (max(8, 8 * round(v * f / 8)) for v in self.crop_size)
        return RegionSpec(self.name, self.indices, (h, w))


REGIONS = (
    RegionSpec("eye_left", tuple(range(36, 42)), (16, 16)),
    RegionSpec("eye_right", tuple(range(42, 48)), (16, 16)),
    RegionSpec("nose", tuple(range(27, 36)), (16, 16)),
    RegionSpec("mouth", tuple(range(48, 68)), (16, 24)),
)
FULL_FACE = RegionSpec("full", tuple(range(N_LANDMARKS)), (64, 64))


def regions_for(resolution: int) -> tuple:
    return tuple(r.scaled(resolution) for r in REGIONS)


def region_landmarks(landmarks, region: RegionSpec) -> np.ndarray:
    return np.asarray(landmarks, dtype=np.float64)[list(region.indices)]


# ------------------------------------------------------ similarity transforms
@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * R(rotation) @ p + translation`` on ``(x, y)`` points."""

    scale: float
    rotation: float
    translation: tuple

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"similarity scale must be positive, got {self.scale}")

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix.T + np.asarray(self.translation)

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        t = -inv_scale * np.array([c * tx - s * ty, s * tx + c * ty])
        return SimilarityTransform(inv_scale, -self.rotation, (float(t[0]), float(t[1])))

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform applying ``other`` first, then ``self``."""
        t = self.apply(np.asarray(other.translation)[None])[0]
        return SimilarityTransform(self.scale * other.scale, self.rotation + other.rotation,
                                   (float(t[0]), float(t[1])))


def estimate_similarity(src, dst) -> SimilarityTransform:
    """Least-squares uniform-scale similarity mapping ``src`` onto ``dst``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"point sets must both be (k, 2), got {src.shape} and {dst.shape}")
    if len(src) < 2:
        raise ValueError("need at least two point pairs")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    var_s = (a * a).sum()
    if var_s < 1e-12:
        raise ValueError("source points are coincident; scale is undefined")
    # closed form for 2-D: treat points as complex numbers
    za = a[:, 0] + 1j * a[:, 1]
    zb = b[:, 0] + 1j * b[:, 1]
    coef = (np.conj(za) * zb).sum() / var_s
    scale = abs(coef)
    if scale < 1e-12:
        raise ValueError("destination points are coincident; scale is undefined")
    rotation = math.atan2(coef.imag, coef.real)
    t = mu_d - scale * np.array([[math.cos(rotation), -math.sin(rotation)],
                                 [math.sin(rotation), math.cos(rotation)]]) @ mu_s
    return SimilarityTransform(float(scale), float(rotation), (float(t[0]), float(t[1])))


# ------------------------------------------------------------ crop / place
CROP_PADDING = 0.4


def region_frame(landmarks, region: RegionSpec, padding: float = CROP_PADDING) -> SimilarityTransform:
    """Axis-aligned frame mapping crop pixel coords to image coords."""
    pts = region_landmarks(landmarks, region)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = hi - lo
    if extent.max() < 1e-9:
        raise ValueError(f"degenerate landmark extent for region {region.name!r}")
    ch, cw = region.crop_size
    scale = max(extent[0] * (1 + padding) / cw, extent[1] * (1 + padding) / ch)
    center = (lo + hi) / 2.0
    tx = center[0] - scale * (cw - 1) / 2.0
    ty = center[1] - scale * (ch - 1) / 2.0
    return SimilarityTransform(float(scale), 0.0, (float(tx), float(ty)))


def _crop_grid(transform: SimilarityTransform, h: int, w: int):
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    pts = transform.apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    return pts[:, 0].reshape(h, w), pts[:, 1].reshape(h, w)


def crop_with_frame(image: Tensor, frame: SimilarityTransform, crop_size) -> Tensor:
    ch, cw = crop_size
    xs, ys = _crop_grid(frame, ch, cw)
    return sample_bilinear(image, xs[None], ys[None], padding="border")


def crop_region(image: Tensor, landmarks, region: RegionSpec):
    """Resample the region into ``region.crop_size``.

    Returns ``(crop, placement)`` where ``placement`` maps crop coordinates
    back to image coordinates.
    """
    frame = region_frame(landmarks, region)
    return crop_with_frame(image, frame, region.crop_size), frame


def region_heatmaps(landmarks, region: RegionSpec, frame: SimilarityTransform,
                    variance: float = HEATMAP_VARIANCE) -> np.ndarray:
    """The region's own heatmap channels evaluated on the crop grid, ``(k, ch, cw)``.

    Equivalent to cropping the continuous full-frame heatmaps.
    """
    ch, cw = region.crop_size
    xs, ys = _crop_grid(frame, ch, cw)
    return _flush_subnormal(gaussian_at(xs, ys, region_landmarks(landmarks, region), variance))


def place_region(canvas_h: int, canvas_w: int, crop: Tensor, placement: SimilarityTransform):
    """Warp ``crop`` onto a zero canvas; returns ``(canvas, mask)``.

    ``mask`` is 1 wherever the canvas pixel maps inside the crop rectangle.
    """
    n, _, ch, cw = crop.shape
    inv = placement.inverse()
    xs, ys = _crop_grid(inv, canvas_h, canvas_w)
    eps = 1e-6
    inside = (xs >= -eps) & (xs <= cw - 1 + eps) & (ys >= -eps) & (ys <= ch - 1 + eps)
    canvas = sample_bilinear(crop, xs[None], ys[None], padding="zeros")
    mask = np.broadcast_to(inside.astype(crop.dtype), (n, 1, canvas_h, canvas_w)).copy()
    return canvas * mask, mask


# ----------------------------------------------------------- shape adaptation
def adapt_landmark_shape(driving, source) -> np.ndarray:
    """Move and rescale ``driving`` so its centroid and RMS spread match ``source``.

    Stand-in for a learned landmark transformer: the driving configuration's
    relative geometry is kept, only its gross position and size follow the
    source.
    """
    d = check_landmarks(driving)
    s = check_landmarks(source)
    d_mu, s_mu = d.mean(axis=0), s.mean(axis=0)
    d_rms = math.sqrt(((d - d_mu) ** 2).sum(axis=1).mean())
    s_rms = math.sqrt(((s - s_mu) ** 2).sum(axis=1).mean())
    if d_rms < 1e-12:
        return np.tile(s_mu, (N_LANDMARKS, 1))
    return (d - d_mu) * (s_rms / d_rms) + s_mu


def rms_spread(points) -> float:
    p = np.asarray(points, dtype=np.float64)
    return math.sqrt(((p - p.mean(axis=0)) ** 2).sum(axis=1).mean())


def crop_batch(images: Tensor, landmarks_list: Sequence, region: RegionSpec) -> tuple:
    """Crop one region from each batch element; returns ``(crops, frames)``."""
    crops, frames = [], []
    for i, lm in enumerate(landmarks_list):
        frame = region_frame(lm, region)
        crops.append(crop_with_frame(images[i:i + 1], frame, region.crop_size))
        frames.append(frame)
    return stack_batch(crops), frames
