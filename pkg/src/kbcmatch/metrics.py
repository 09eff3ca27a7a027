"""Flow supervision targets and evaluation metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .decoder import FlowMap
from .errors import ConfigError, ShapeError
from .kbc import KeypointSet


def build_gt_flow(src: KeypointSet, trg: KeypointSet, grid_h: int, grid_w: int,
                  stride: float = 16.0) -> FlowMap:
    """Sparse ground-truth flow: the cell nearest each valid source point holds
    the pair displacement in grid units; everything else is masked off. Cell
    collisions keep the pair whose source point is nearest the cell center."""
    if len(src) != len(trg):
        raise ShapeError(f"keypoint counts differ: {len(src)} vs {len(trg)}")
    values = np.zeros((2, grid_h, grid_w))
    mask = np.zeros((grid_h, grid_w), dtype=bool)
    best = np.full((grid_h, grid_w), np.inf)
    both = src.valid & trg.valid
    for (sx, sy), (tx, ty), ok in zip(src.points, trg.points, both):
        if not ok:
            continue
        gx, gy = sx / stride, sy / stride
        j = int(np.clip(round(gx), 0, grid_w - 1))
        i = int(np.clip(round(gy), 0, grid_h - 1))
        dist = (gx - j) ** 2 + (gy - i) ** 2
        if dist < best[i, j]:
            best[i, j] = dist
            values[0, i, j] = (tx - sx) / stride
            values[1, i, j] = (ty - sy) / stride
            mask[i, j] = True
    return FlowMap(values=values, mask=mask)


def aepe_loss(pred: FlowMap, gt: FlowMap) -> float:
    """Average end-point error: mean Euclidean norm of the flow difference over
    supervised cells."""
    if pred.grid != gt.grid:
        raise ShapeError(f"flow extents differ: {pred.grid} vs {gt.grid}")
    cells = pred.mask & gt.mask
    if not cells.any():
        warnings.warn("no supervised cells; AEPE defined as 0")
        return 0.0
    diff = pred.values - gt.values
    norms = np.sqrt((diff ** 2).sum(axis=0))
    return float(norms[cells].mean())


@dataclass
class EvalRecord:
    """Per-pair PCK record: distances, threshold, hit flags and the aggregate."""

    distances: np.ndarray
    threshold: float
    hits: np.ndarray
    n_valid: int
    pck: float
    alpha: float
    reference: float = field(default=0.0)

    def to_record(self) -> dict:
        return {
            "alpha": self.alpha,
            "threshold_px": self.threshold,
            "n_valid": self.n_valid,
            "hits": [bool(h) for h in self.hits],
            "distances": [round(float(d), 6) for d in self.distances],
            "pck": self.pck,
        }


def pck(pred: KeypointSet, gt: KeypointSet, alpha: float, ref_h: float, ref_w: float) -> EvalRecord:
    """Percentage of correct keypoints: a prediction hits when its distance to
    ground truth is strictly below alpha * max(ref_h, ref_w)."""
    if len(pred) != len(gt):
        raise ShapeError(f"keypoint counts differ: {len(pred)} vs {len(gt)}")
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    both = pred.valid & gt.valid
    if not both.any():
        raise ConfigError("no jointly valid keypoints to score")
    d = np.linalg.norm(pred.points[both] - gt.points[both], axis=1)
    reference = float(max(ref_h, ref_w))
    threshold = alpha * reference
    hits = d < threshold
    return EvalRecord(
        distances=d,
        threshold=float(threshold),
        hits=hits,
        n_valid=int(both.sum()),
        pck=float(hits.mean()),
        alpha=float(alpha),
        reference=reference,
    )
