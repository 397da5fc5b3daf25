"""Held-out evaluation: self- and cross-identity reenactment over a pair manifest.

A manifest is a CSV file with the header
``kind,source_image,source_landmarks,driving_image,driving_landmarks``; ``kind``
is ``self`` or ``cross`` and paths are relative to the manifest's directory.
Driving images are read only to score self-reenactment against ground truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..geometry import read_landmarks, write_landmarks
from ..synthdata import FaceDataset
from .imageio import read_image, write_image
from .metrics import aucon, csim, prmse

COLUMNS = ("kind", "source_image", "source_landmarks", "driving_image", "driving_landmarks")
KINDS = ("self", "cross")


class ManifestError(ValueError):
    """Malformed manifest or references to files that do not exist."""


@dataclass
class PairEntry:
    kind: str
    source_image: Path
    source_landmarks: Path
    driving_image: Optional[Path]
    driving_landmarks: Path


@dataclass
class PairLoaded:
    kind: str
    source_image: np.ndarray
    source_landmarks: np.ndarray
    driving_image: Optional[np.ndarray]
    driving_landmarks: np.ndarray


def read_manifest(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ManifestError(f"{path}: header must be {','.join(COLUMNS)}")
        entries, problems = [], []
        for lineno, row in enumerate(reader, start=2):
            kind = row["kind"].strip()
            if kind not in KINDS:
                problems.append(f"{path}:{lineno}: unknown kind {kind!r}")
                continue
            drv_img = row["driving_image"].strip()
            if kind == "self" and not drv_img:
                problems.append(f"{path}:{lineno}: self pairs need a driving image")
            entry = PairEntry(kind, root / row["source_image"].strip(), root / row["source_landmarks"].strip(),
                              root / drv_img if drv_img else None, root / row["driving_landmarks"].strip())
            for p in (entry.source_image, entry.source_landmarks, entry.driving_image, entry.driving_landmarks):
                if p is not None and not p.is_file():
                    problems.append(f"{path}:{lineno}: missing file {p}")
            entries.append(entry)
    if problems:
        raise ManifestError("manifest references problems:\n  " + "\n  ".join(problems))
    if not entries:
        raise ManifestError(f"{path}: manifest lists no pairs")
    return entries


def write_manifest(path, rows: Sequence[Sequence[str]]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)


def load_pair(entry: PairEntry) -> PairLoaded:
    drv = read_image(entry.driving_image) if entry.driving_image is not None else None
    return PairLoaded(entry.kind, read_image(entry.source_image), read_landmarks(entry.source_landmarks),
                      drv, read_landmarks(entry.driving_landmarks))


def read_pair_file(path, n_rows: int, label: str) -> list:
    """JSON list with one ``[a, b]`` pair (or null) per manifest row."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{label} file {path}: {exc}") from None
    if not isinstance(data, list) or len(data) != n_rows:
        raise ManifestError(f"{label} file {path}: expected a list of {n_rows} entries")
    for i, item in enumerate(data):
        if item is not None and (not isinstance(item, list) or len(item) != 2):
            raise ManifestError(f"{label} file {path}: entry {i} is not an [a, b] pair")
    return data


# ------------------------------------------------------------------ dataset
def write_frames(out_dir, dataset: FaceDataset) -> list:
    """Render every frame of ``dataset`` to PNG + landmark text; returns the file stems."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems, params = [], {}
    for i in range(dataset.n_identities):
        for k in range(dataset.frames_per_identity):
            sample = dataset.frame(i, k)
            stem = f"id{i:04d}_f{k:02d}"
            write_image(out_dir / f"{stem}.png", sample.image)
            write_landmarks(out_dir / f"{stem}.txt", sample.landmarks)
            params[stem] = {"appearance": sample.params.appearance.tolist(),
                            "pose": sample.params.pose.tolist(),
                            "expression": sample.params.expression.tolist()}
            stems.append(stem)
    (out_dir / "params.json").write_text(json.dumps(params, indent=1))
    return stems


def default_pairs(n_identities: int, frames: int) -> list:
    """Self pairs (frame 0 -> every other frame) then one cross pair per identity
    (source identity i frame 0, driving identity i+1 frame 1)."""
    rows = []
    for i in range(n_identities):
        for k in range(1, frames):
            rows.append(("self", f"id{i:04d}_f00.png", f"id{i:04d}_f00.txt",
                         f"id{i:04d}_f{k:02d}.png", f"id{i:04d}_f{k:02d}.txt"))
    if n_identities > 1:
        for i in range(n_identities):
            j = (i + 1) % n_identities
            rows.append(("cross", f"id{i:04d}_f00.png", f"id{i:04d}_f00.txt",
                         f"id{j:04d}_f01.png", f"id{j:04d}_f01.txt"))
    return rows


def synthesize(out_dir, n_identities: int, frames: int, seed: int, resolution: int = 64) -> Path:
    dataset = FaceDataset(n_identities, frames, seed, resolution)
    write_frames(out_dir, dataset)
    manifest = Path(out_dir) / "manifest.csv"
    write_manifest(manifest, default_pairs(n_identities, frames))
    return manifest


# --------------------------------------------------------------- evaluation
@dataclass
class PairResult:
    index: int
    kind: str
    model_l1: Optional[float]
    baseline_l1: Optional[float]
    csim: Optional[float] = None
    prmse: Optional[float] = None
    aucon: Optional[float] = None


@dataclass
class EvalReport:
    rows: list
    summary: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "summary": self.summary}

    def table(self) -> str:
        headers = ("pair", "kind", "model_l1", "baseline_l1", "csim", "prmse", "aucon")

        def fmt(v):
            return "-" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v))

        body = [[fmt(getattr(r, h if h != "pair" else "index")) for h in headers] for r in self.rows]
        widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body]
        lines.append("")
        lines += [f"{k}: {fmt(v)}" for k, v in self.summary.items()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        """Write the text table to ``path`` and the record to ``path`` + ``.json``."""
        path = Path(path)
        path.write_text(self.table())
        record = path.with_name(path.name + ".json")
        record.write_text(json.dumps(self.as_dict(), indent=1))
        return record


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def summarize(rows: Sequence[PairResult]) -> dict:
    self_rows = [r for r in rows if r.kind == "self"]
    out = {"pairs": len(rows), "self_pairs": len(self_rows), "cross_pairs": len(rows) - len(self_rows),
           "mean_model_l1": _mean(r.model_l1 for r in self_rows),
           "mean_baseline_l1": _mean(r.baseline_l1 for r in self_rows)}
    if self_rows:
        out["fraction_beating_baseline"] = float(np.mean([r.model_l1 < r.baseline_l1 for r in self_rows]))
    for key in ("csim", "prmse", "aucon"):
        out[f"mean_{key}"] = _mean(getattr(r, key) for r in rows)
    return out


def evaluate(trainer, manifest, id_vectors=None, poses=None, aus=None) -> EvalReport:
    """Reenact every manifest pair one at a time and score it."""
    entries = read_manifest(manifest)
    extra = {}
    for key, path, fn in (("csim", id_vectors, csim), ("prmse", poses, prmse), ("aucon", aus, aucon)):
        if path is not None:
            extra[key] = (read_pair_file(path, len(entries), key), fn)
    rows = []
    for idx, entry in enumerate(entries):
        pair = load_pair(entry)
        out = trainer.reenact(pair.source_image[None], [pair.source_landmarks], [pair.driving_landmarks],
                              same_identity=pair.kind == "self")[0]
        result = PairResult(idx, pair.kind, None, None)
        if pair.kind == "self":
            result.model_l1 = float(np.abs(out - pair.driving_image).mean())
            result.baseline_l1 = float(np.abs(pair.source_image - pair.driving_image).mean())
        for key, (data, fn) in extra.items():
            if data[idx] is not None:
                setattr(result, key, fn(*data[idx]))
        rows.append(result)
    return EvalReport(rows, summarize(rows))
