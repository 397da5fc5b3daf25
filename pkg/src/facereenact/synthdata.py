"""Procedural abstract faces with exact 68-point landmarks.

Each identity owns a fixed appearance vector (colors, face aspect, feature
sizes); every frame draws a pose and an expression independently. The renderer
emits the image and the landmarks from the same parameters, so the two agree
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import N_LANDMARKS

APPEARANCE_FIELDS = ("skin_r", "skin_g", "skin_b", "hair_r", "hair_g", "hair_b",
                     "eye_r", "eye_g", "eye_b", "face_aspect", "eye_size", "nose_size", "mouth_width")
APPEARANCE_RANGES = np.array(
    [(0.45, 0.95)] * 3 + [(0.05, 0.6)] * 3 + [(0.05, 0.7)] * 3
    + [(0.85, 1.15), (0.8, 1.2), (0.8, 1.2), (0.8, 1.2)])

POSE_FIELDS = ("shear", "rotation", "tx", "ty", "scale")
# tx/ty are fractions of the frame size
POSE_RANGES = np.array([(-0.2, 0.2), (-0.35, 0.35), (-0.1, 0.1), (-0.1, 0.1), (0.85, 1.15)])

EXPRESSION_FIELDS = ("eye_open_left", "eye_open_right", "mouth_open", "mouth_curve", "brow_raise")
EXPRESSION_RANGES = np.array([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)])

BACKGROUND = np.array([0.32, 0.36, 0.42])


def _check_range(name, values, ranges, fields):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(ranges),):
        raise ValueError(f"{name} must have {len(ranges)} entries, got shape {values.shape}")
    for v, (lo, hi), f in zip(values, ranges, fields):
        if not (lo - 1e-9 <= v <= hi + 1e-9):
            raise ValueError(f"{name}.{f}={v:.4f} outside [{lo}, {hi}]")
    return values


@dataclass
class FaceParams:
    appearance: np.ndarray
    pose: np.ndarray
    expression: np.ndarray

    def validate(self) -> "FaceParams":
        _check_range("appearance", self.appearance, APPEARANCE_RANGES, APPEARANCE_FIELDS)
        _check_range("pose", self.pose, POSE_RANGES, POSE_FIELDS)
        _check_range("expression", self.expression, EXPRESSION_RANGES, EXPRESSION_FIELDS)
        return self

    def with_pose(self, **changes) -> "FaceParams":
        pose = np.array(self.pose, dtype=np.float64)
        for key, value in changes.items():
            pose[POSE_FIELDS.index(key)] = value
        return FaceParams(np.array(self.appearance), pose, np.array(self.expression))

    def with_expression(self, **changes) -> "FaceParams":
        expr = np.array(self.expression, dtype=np.float64)
        for key, value in changes.items():
            expr[EXPRESSION_FIELDS.index(key)] = value
        return FaceParams(np.array(self.appearance), np.array(self.pose), expr)


@dataclass
class SyntheticSample:
    image: np.ndarray  # (3, h, w) float32 in [-1, 1]
    landmarks: np.ndarray  # (68, 2) pixel coordinates
    params: FaceParams = field(repr=False)


NEUTRAL_POSE = np.array([0.0, 0.0, 0.0, 0.0, 1.0])


# ------------------------------------------------------------- face layout
def _layout(appearance, expression):
    """Canonical feature geometry in frame-fraction units, origin at face center."""
    (_, _, _, _, _, _, _, _, _, aspect, eye_size, nose_size, mouth_width) = appearance
    open_l, open_r, mouth_open, curve, brow = expression
    g = {}
    g["head"] = (0.0, 0.02, 0.26 * aspect, 0.34)
    for side, sign, openness in (("left", -1.0, open_l), ("right", 1.0, open_r)):
        rx = 0.062 * eye_size
        g[f"eye_{side}"] = (sign * 0.11 * aspect, -0.06, rx, 0.042 * eye_size * (0.08 + 0.92 * openness))
        g[f"brow_{side}"] = (sign * 0.11 * aspect, -0.14 - 0.03 * brow, 0.085 * eye_size)
    g["nose"] = (0.0, -0.06, 0.045 * nose_size, 0.15 * nose_size)
    g["mouth"] = (0.0, 0.175, 0.09 * mouth_width, 0.03 * curve, 0.05 * mouth_open)
    return g


def _lip_curves(t, mouth):
    """Inner/outer lip y-positions at normalized mouth abscissa ``t`` in [-1, 1]."""
    _, cy, _, lift, gap = mouth
    base = cy - lift * t * t
    bulge = np.clip(1.0 - t * t, 0.0, None)
    inner_up = base - 0.5 * gap * bulge
    inner_lo = base + 0.5 * gap * bulge
    outer_up = inner_up - (0.018 * np.sqrt(bulge) + 0.003)
    outer_lo = inner_lo + (0.024 * np.sqrt(bulge) + 0.003)
    return outer_up, inner_up, inner_lo, outer_lo


def canonical_landmarks(appearance, expression) -> np.ndarray:
    """68 iBUG-ordered landmarks in canonical face coordinates."""
    g = _layout(appearance, expression)
    pts = np.zeros((N_LANDMARKS, 2))
    hx, hy, ha, hb = g["head"]
    phi = math.pi - np.arange(17) * math.pi / 16
    pts[0:17, 0] = hx + ha * np.cos(phi)
    pts[0:17, 1] = hy + hb * np.sin(phi)
    for start, side in ((17, "left"), (22, "right")):
        bx, by, half = g[f"brow_{side}"]
        s = np.linspace(-1.0, 1.0, 5)
        pts[start:start + 5, 0] = bx + half * s
        pts[start:start + 5, 1] = by - 0.018 * (1.0 - s * s)
    nx, ny, nw, nl = g["nose"]
    pts[27:31, 0] = nx
    pts[27:31, 1] = ny + nl * np.arange(4) / 3.0 * 0.85
    base_y = ny + nl
    pts[31:36, 0] = nx + nw * np.linspace(-1.0, 1.0, 5)
    pts[31:36, 1] = base_y - 0.012 * np.abs(np.linspace(-1.0, 1.0, 5))
    k = math.sqrt(1.0 - 1.0 / 9.0)
    for start, side in ((36, "left"), (42, "right")):
        ex, ey, rx, ry = g[f"eye_{side}"]
        ring = [(-1.0, 0.0), (-1 / 3, -k), (1 / 3, -k), (1.0, 0.0), (1 / 3, k), (-1 / 3, k)]
        for i, (u, v) in enumerate(ring):
            pts[start + i] = (ex + rx * u, ey + ry * v)
    mx, _, mw, _, _ = g["mouth"]
    outer_t = np.array([-1.0, -2 / 3, -1 / 3, 0.0, 1 / 3, 2 / 3, 1.0, 2 / 3, 1 / 3, 0.0, -1 / 3, -2 / 3])
    o_up, _, _, o_lo = _lip_curves(outer_t, g["mouth"])
    pts[48:60, 0] = mx + mw * outer_t
    pts[48:60, 1] = np.where(np.arange(12) <= 6, o_up, o_lo)
    inner_t = np.array([-0.85, -0.5, 0.0, 0.5, 0.85, 0.5, 0.0, -0.5])
    _, i_up, i_lo, _ = _lip_curves(inner_t, g["mouth"])
    pts[60:68, 0] = mx + mw * inner_t
    pts[60:68, 1] = np.where(np.arange(8) <= 4, i_up, i_lo)
    return pts


def _pose_matrix(pose, h, w):
    shear, rot, tx, ty, scale = pose
    unit = float(min(h, w))
    c, s = math.cos(rot), math.sin(rot)
    m = scale * unit * np.array([[c, -s], [s, c]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    t = np.array([(w - 1) / 2.0 + tx * w, (h - 1) / 2.0 + ty * h])
    return m, t


def pose_landmarks(canonical: np.ndarray, pose, h: int, w: int) -> np.ndarray:
    m, t = _pose_matrix(pose, h, w)
    return canonical @ m.T + t


# ----------------------------------------------------------------- renderer
def _coverage(dist_px):
    """Anti-aliased coverage from a signed distance in pixels (inside < 0)."""
    return np.clip(0.5 - dist_px, 0.0, 1.0)


def _ellipse_sd(u, v, cx, cy, a, b):
    r = np.sqrt(((u - cx) / a) ** 2 + ((v - cy) / b) ** 2)
    return (r - 1.0) * min(a, b)


def _blend(img, color, alpha):
    img *= 1.0 - alpha[None]
    img += np.asarray(color).reshape(3, 1, 1) * alpha[None]


def render(params: FaceParams, h: int = 64, w: int = 64) -> SyntheticSample:
    """Deterministically rasterize ``params`` into an image plus landmarks."""
    params.validate()
    app, pose, expr = (np.asarray(x, dtype=np.float64) for x in (params.appearance, params.pose, params.expression))
    g = _layout(app, expr)
    m, t = _pose_matrix(pose, h, w)
    minv = np.linalg.inv(m)
    px_per_unit = pose[4] * min(h, w)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rel = np.stack([xs - t[0], ys - t[1]])
    u = minv[0, 0] * rel[0] + minv[0, 1] * rel[1]
    v = minv[1, 0] * rel[0] + minv[1, 1] * rel[1]

    def cov(sd):
        return _coverage(sd * px_per_unit)

    skin, hair, eye = app[0:3], app[3:6], app[6:9]
    img = np.broadcast_to(BACKGROUND.reshape(3, 1, 1), (3, h, w)).copy()
    hx, hy, ha, hb = g["head"]
    hair_mask = cov(_ellipse_sd(u, v, hx, hy - 0.02, ha * 1.1, hb * 1.06)) * cov(v - (hy - 0.12))
    _blend(img, hair, hair_mask)
    _blend(img, skin, cov(_ellipse_sd(u, v, hx, hy, ha, hb)) * (1.0 - 0.85 * hair_mask * cov(v - (hy - 0.2))))

    for side in ("left", "right"):
        bx, by, half = g[f"brow_{side}"]
        s = np.clip((u - bx) / half, -1.0, 1.0)
        centre = by - 0.018 * (1.0 - s * s)
        band = cov(np.abs(v - centre) - 0.012) * cov(np.abs(u - bx) - half)
        _blend(img, hair * 0.7, band)
        ex, ey, rx, ry = g[f"eye_{side}"]
        white = cov(_ellipse_sd(u, v, ex, ey, rx, ry))
        _blend(img, (0.95, 0.95, 0.93), white)
        _blend(img, eye, white * cov(_ellipse_sd(u, v, ex, ey, 0.5 * rx, 0.5 * rx)))
        _blend(img, (0.03, 0.03, 0.03), white * cov(_ellipse_sd(u, v, ex, ey, 0.2 * rx, 0.2 * rx)))

    nx, ny, nw, nl = g["nose"]
    frac = np.clip((v - ny) / nl, 0.0, 1.0)
    half_w = 0.15 * nw + 0.85 * nw * frac
    wedge = cov(np.abs(u - nx) - half_w) * cov(ny - v) * cov(v - (ny + nl))
    _blend(img, skin * 0.72, wedge * 0.8)

    mx, _, mw, _, _ = g["mouth"]
    tt = np.clip((u - mx) / mw, -1.0, 1.0)
    o_up, i_up, i_lo, o_lo = _lip_curves(tt, g["mouth"])
    inside_x = cov(np.abs(u - mx) - mw)
    lips = inside_x * cov(o_up - v) * cov(v - o_lo)
    lip_color = np.clip(skin * 0.55 + np.array([0.35, 0.05, 0.08]), 0.0, 1.0)
    _blend(img, lip_color, lips)
    _blend(img, (0.12, 0.02, 0.04), inside_x * cov(i_up - v) * cov(v - i_lo))

    landmarks = pose_landmarks(canonical_landmarks(app, expr), pose, h, w)
    image = (2.0 * img - 1.0).astype(np.float32)
    return SyntheticSample(image=image, landmarks=landmarks, params=params)


# ----------------------------------------------------------------- sampling
def _uniform(rng, ranges):
    return rng.uniform(ranges[:, 0], ranges[:, 1])


def identity_appearance(identity_seed: int) -> np.ndarray:
    return _uniform(np.random.default_rng([int(identity_seed), 0xA99]), APPEARANCE_RANGES)


def random_frame(appearance, rng: np.random.Generator) -> FaceParams:
    return FaceParams(np.array(appearance), _uniform(rng, POSE_RANGES), _uniform(rng, EXPRESSION_RANGES))


def sample_pair(identity_seed: int, frame_seed: int, h: int = 64, w: int = 64):
    """Two independently posed frames of one identity: ``(source, driving)``."""
    app = identity_appearance(identity_seed)
    rng = np.random.default_rng([int(identity_seed), int(frame_seed), 0xF8])
    return render(random_frame(app, rng), h, w), render(random_frame(app, rng), h, w)


def cross_pair(identity_a: int, identity_b: int, frame_seed: int, h: int = 64, w: int = 64):
    """Source frame of identity ``a`` and driving frame of identity ``b``."""
    if identity_a == identity_b:
        raise ValueError("cross_pair needs two different identities")
    rng = np.random.default_rng([int(identity_a), int(identity_b), int(frame_seed), 0xC5])
    src = render(random_frame(identity_appearance(identity_a), rng), h, w)
    drv = render(random_frame(identity_appearance(identity_b), rng), h, w)
    return src, drv


class FaceDataset:
    """``n_identities x frames_per_identity`` fixed frames, rendered lazily and cached.

    Identities are numbered from ``identity_offset`` so held-out sets can use a
    disjoint range.
    """

    def __init__(self, n_identities: int, frames_per_identity: int, seed: int = 0,
                 resolution: int = 64, identity_offset: int = 0):
        if n_identities < 1 or frames_per_identity < 2:
            raise ValueError("need at least one identity and two frames per identity")
        self.n_identities = n_identities
        self.frames_per_identity = frames_per_identity
        self.seed = seed
        self.resolution = resolution
        self.identity_offset = identity_offset
        self._cache: dict = {}

    def identity_seed(self, identity: int) -> int:
        return self.seed * 1_000_003 + self.identity_offset + identity

    def frame(self, identity: int, frame: int) -> SyntheticSample:
        key = (identity, frame)
        if key not in self._cache:
            ident = self.identity_seed(identity)
            rng = np.random.default_rng([ident, frame, 0xF7])
            params = random_frame(identity_appearance(ident), rng)
            self._cache[key] = render(params, self.resolution, self.resolution)
        return self._cache[key]

    def batch_indices(self, step: int, batch_size: int) -> list:
        """Pure function of ``(seed, step)``: ``[(identity, src_frame, drv_frame), ...]``."""
        rng = np.random.default_rng([self.seed, int(step), 0xBA])
        out = []
        for _ in range(batch_size):
            ident = int(rng.integers(self.n_identities))
            a, b = rng.choice(self.frames_per_identity, size=2, replace=False)
            out.append((ident, int(a), int(b)))
        return out

    def pairs(self, step: int, batch_size: int) -> list:
        return [(self.frame(i, a), self.frame(i, b)) for i, a, b in self.batch_indices(step, batch_size)]
