"""Tile (3, h, w) images in [-1, 1] into one PNG."""

import numpy as np

from facereenact.pipeline.imageio import write_image


def save_grid(path, rows, pad=2):
    h, w = rows[0][0].shape[1:]
    n_cols = max(len(r) for r in rows)
    sheet = np.ones((3, len(rows) * (h + pad) + pad, n_cols * (w + pad) + pad), dtype=np.float32)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            sheet[:, y:y + h, x:x + w] = img
    write_image(path, sheet)
