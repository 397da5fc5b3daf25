"""
Reenactment grid from a trained checkpoint
==========================================

Rows keep one source face; columns take the pose and expression of a driving
face from a different held-out identity. Appearance should stay constant along
a row and pose should stay constant down a column. Needs a checkpoint, for
example the one written by ``facereenact train --config configs/toy.ini``.
"""

import argparse
from pathlib import Path

from facereenact.pipeline.evaluation import load_pair, read_manifest
from facereenact.pipeline.training import Trainer
from _grid import save_grid

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--ckpt", default="checkpoints/toy.ckpt")
parser.add_argument("--manifest", default="data/eval/manifest.csv")
parser.add_argument("--n", type=int, default=5)
parser.add_argument("--out", default="demos/out/reenactment_grid.png")
args = parser.parse_args()

trainer = Trainer.load(args.ckpt)
pairs = [load_pair(e) for e in read_manifest(args.manifest) if e.kind == "cross"][: args.n]

# %%
# Cross-identity driving landmarks are shape-adapted to each source first
# (centroid and spread), so a narrow driver does not squeeze a wide face.
blank = pairs[0].source_image * 0 + 1
header = [blank] + [p.driving_image for p in pairs]
rows = [header]
for src in pairs:
    row = [src.source_image]
    for drv in pairs:
        out = trainer.reenact(src.source_image[None], [src.source_landmarks], [drv.driving_landmarks])
        row.append(out[0])
    rows.append(row)

Path(args.out).parent.mkdir(parents=True, exist_ok=True)
save_grid(args.out, rows)
print(f"wrote {args.out}")
