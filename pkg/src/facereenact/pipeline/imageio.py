"""8-bit PNG <-> ``(3, h, w)`` float arrays in [-1, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    pass


def read_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from None
    return (rgb / 127.5 - 1.0).transpose(2, 0, 1).copy()


def to_uint8(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, h, w) image, got shape {image.shape}")
    return np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def write_image(path, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(image)).save(Path(path), format="PNG")
