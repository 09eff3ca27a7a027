"""Stacked 6-channel 4D correlation volumes.

Each channel holds the pairwise similarity between one source/target feature
pair, reshaped to the fixed axis order (batch, channel, source-rows,
source-cols, target-rows, target-cols). Similarity is per-token cosine: every
entry lands in [-1, 1], which the decoder's normalisation relies on. A
"frobenius" mode dividing by the two global matrix norms is kept for the
record but is not used anywhere in the pipeline.
"""

from __future__ import annotations

import numpy as np

from .csfa import FEATURE_LIST_SIZE, AlignedFeatureSet
from .errors import ShapeError

COSINE_EPS = 1e-8
RANGE_TOL = 1e-5


def cosine_correlation(src: np.ndarray, trg: np.ndarray, mode: str = "cosine") -> np.ndarray:
    """Pairwise similarity (Ns,D) x (Nt,D) -> (Ns,Nt); zero rows map to 0."""
    if src.shape[-1] != trg.shape[-1]:
        raise ShapeError(f"channel axis: source {src.shape[-1]} != target {trg.shape[-1]}")
    scores = src @ trg.T
    if mode == "cosine":
        ns = np.linalg.norm(src, axis=1)
        nt = np.linalg.norm(trg, axis=1)
        return scores / (ns[:, None] * nt[None, :] + COSINE_EPS)
    if mode == "frobenius":
        denom = np.linalg.norm(src) * np.linalg.norm(trg) + COSINE_EPS
        return scores / denom
    raise ShapeError(f"unknown correlation mode '{mode}'")


def build_corr4d(src_set: AlignedFeatureSet, trg_set: AlignedFeatureSet,
                 dims: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Correlate the two six-feature lists channel-wise and reshape to
    (1, 6, h, w, h', w')."""
    if dims is None:
        dims = (src_set.grid_h, src_set.grid_w, trg_set.grid_h, trg_set.grid_w)
    h, w, h2, w2 = dims
    ns = src_set.features[0].shape[0]
    nt = trg_set.features[0].shape[0]
    if ns != h * w:
        raise ShapeError(f"source token count {ns} does not factor into {h}x{w}")
    if nt != h2 * w2:
        raise ShapeError(f"target token count {nt} does not factor into {h2}x{w2}")
    channels = [
        cosine_correlation(s, t).reshape(h, w, h2, w2)
        for s, t in zip(src_set.features, trg_set.features)
    ]
    corr = np.stack(channels, axis=0)[None]
    lo, hi = float(corr.min()), float(corr.max())
    if lo < -1.0 - RANGE_TOL or hi > 1.0 + RANGE_TOL:
        raise ShapeError(f"correlation entries outside [-1,1]: range [{lo}, {hi}]")
    assert corr.shape == (1, FEATURE_LIST_SIZE, h, w, h2, w2)
    return corr
