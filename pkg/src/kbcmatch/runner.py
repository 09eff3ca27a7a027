"""Batch inference and evaluation over annotation records.

Shared by the CLI and the HTTP service: both surfaces reduce to these two
functions plus a way to fetch image tensors by id.
"""

from __future__ import annotations

import numpy as np

from .annotations import PairAnnotation, keypoints_from_json, keypoints_to_json, points_to_json
from .config import RunConfig
from .errors import AnnotationError, PipelineError
from .kbc import KbcTransform
from .metrics import pck
from .pipeline import ModelWeights, PairMatcher, run_inference


def infer_pairs(annotations: list[PairAnnotation], load_image, weights: ModelWeights,
                provider, cfg: RunConfig, kbc_mode: str | None = None) -> list[dict]:
    """Run gated inference over every pair (sorted by pair id) and return
    prediction records. ``load_image`` maps an image id to a (3,H,W) tensor."""
    mode = kbc_mode or cfg.kbc_mode
    matcher = PairMatcher(provider, weights, cfg)
    records = []
    for ann in sorted(annotations, key=lambda a: a.pair_id):
        try:
            result = run_inference(
                load_image(ann.src_image), load_image(ann.trg_image),
                ann.src_keypoints, provider, weights,
                threshold=cfg.kbc_threshold, cfg=cfg, kbc_mode=mode,
                src_id=ann.src_image, trg_id=ann.trg_image, matcher=matcher,
            )
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError("inference", f"{ann.pair_id}: {exc}") from exc
        raw_points, raw_valid = keypoints_to_json(result.raw_predictions)
        records.append({
            "pair_id": ann.pair_id,
            "kbc_mode": mode,
            "passes": result.passes,
            "points_raw": raw_points,
            "valid": raw_valid,
            "target_transform": result.target_transform.to_record(),
            "source_transform": result.source_transform.to_record(),
            "points": points_to_json(result.predictions.points),
        })
    return records


def _reference_extent(ann: PairAnnotation, alpha_reference: str) -> tuple[float, float]:
    if alpha_reference == "bbox" and ann.trg_bbox is not None:
        x0, y0, x1, y1 = ann.trg_bbox
        return float(y1 - y0), float(x1 - x0)
    w, h = ann.trg_size
    return float(h), float(w)


def evaluate_pairs(annotations: list[PairAnnotation], predictions: list[dict],
                   alphas=(0.05, 0.1, 0.15), alpha_reference: str = "bbox") -> list[dict]:
    """Score predictions against ground truth: one record per pair plus an
    aggregate footer. Raw predictions are projected back through the stored
    target transform before scoring."""
    by_id = {a.pair_id: a for a in annotations}
    pair_records = []
    sums = {float(a): 0.0 for a in alphas}
    count = 0
    for rec in sorted(predictions, key=lambda r: r["pair_id"]):
        pair_id = rec["pair_id"]
        ann = by_id.get(pair_id)
        if ann is None:
            raise AnnotationError(f"prediction for unknown pair '{pair_id}'")
        if ann.trg_keypoints is None:
            raise AnnotationError(f"{pair_id}: no ground-truth target keypoints to score")
        transform = KbcTransform.from_record(rec["target_transform"])
        raw = keypoints_from_json(rec["points_raw"], rec.get("valid"))
        pred = raw.replace_points(transform.invert(raw.points)) if transform.applied else raw
        ref_h, ref_w = _reference_extent(ann, alpha_reference)
        out = {"type": "pair", "pair_id": pair_id, "pck": {}, "threshold_px": {},
               "reference_px": max(ref_h, ref_w)}
        for alpha in alphas:
            record = pck(pred, ann.trg_keypoints, alpha, ref_h, ref_w)
            out["pck"][f"{alpha:g}"] = record.pck
            out["threshold_px"][f"{alpha:g}"] = round(record.threshold, 6)
            out["n_valid"] = record.n_valid
            sums[float(alpha)] += record.pck
        pair_records.append(out)
        count += 1
    footer = {
        "type": "aggregate",
        "pairs": count,
        "alpha_reference": alpha_reference,
        "mean_pck": {f"{a:g}": (sums[float(a)] / count if count else 0.0) for a in alphas},
    }
    return pair_records + [footer]
