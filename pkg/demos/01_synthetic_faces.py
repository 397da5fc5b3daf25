"""
Synthetic faces and their landmarks
===================================

Every identity has a fixed appearance (colours, proportions); each frame draws
a fresh pose and expression. Landmarks come from the same parameters as the
pixels, so they are exact. This writes a contact sheet with one identity per
row and its heatmap overlay below.
"""

import argparse
from pathlib import Path

import numpy as np

from facereenact.geometry import rasterize_heatmaps
from facereenact.synthdata import FaceDataset
from _grid import save_grid

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--out", default="demos/out/synthetic_faces.png")
parser.add_argument("--identities", type=int, default=4)
parser.add_argument("--frames", type=int, default=6)
args = parser.parse_args()

data = FaceDataset(args.identities, args.frames, seed=0)

# %%
# Heatmaps use variance 3, so each landmark is a blob about 3-4 pixels wide.
# Summing the 68 channels and painting them red makes the layout visible.
rows = []
for i in range(args.identities):
    faces, overlays = [], []
    for k in range(args.frames):
        s = data.frame(i, k)
        heat = rasterize_heatmaps(s.landmarks, 64, 64).max(axis=0)
        overlay = s.image.copy()
        overlay[0] = np.maximum(overlay[0], 2 * heat - 1)
        faces.append(s.image)
        overlays.append(overlay)
    rows += [faces, overlays]

Path(args.out).parent.mkdir(parents=True, exist_ok=True)
save_grid(args.out, rows)
print(f"wrote {args.out}")
