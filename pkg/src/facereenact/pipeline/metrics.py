"""Evaluation metrics computed over externally supplied measurements."""

from __future__ import annotations

import numpy as np


def _pair(a, b, label):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"{label}: paired entries differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        raise ValueError(f"{label}: empty vectors")
    return a, b


def csim(v1, v2) -> float:
    """Cosine similarity of two identity vectors."""
    a, b = _pair(v1, v2, "csim")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("csim: zero vector has no direction")
    return float(a @ b / (na * nb))


def prmse(pose_a, pose_b) -> float:
    """Root-mean-square difference of head-pose angles, in the input unit (degrees)."""
    a, b = _pair(pose_a, pose_b, "prmse")
    if a.size != 3:
        raise ValueError(f"prmse: expected 3 angles, got {a.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def aucon(au_a, au_b) -> float:
    """Fraction of action units whose binary activations agree."""
    a, b = _pair(au_a, au_b, "aucon")
    if not (np.isin(a, (0.0, 1.0)).all() and np.isin(b, (0.0, 1.0)).all()):
        raise ValueError("aucon: activations must be 0 or 1")
    return float(np.mean(a == b))
