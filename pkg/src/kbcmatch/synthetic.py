"""Synthetic data: the small-object benchmark and constant-shift training pairs.

The benchmark places a smooth-textured object (side well under half the frame)
on an independent background, translates it to the target frame, and annotates
eight keypoints on it, several of them closer together than the feature stride.
Smooth textures keep the toy features informative under the enlargement the
crop procedure applies, and the tight keypoint cluster is exactly the failure
mode the cropping is meant to fix.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .annotations import PairAnnotation, write_annotations
from .correlation import build_corr4d
from .csfa import CsfaWeights, csfa_forward
from .decoder import FlowMap
from .errors import ConfigError
from .features import toy_extract
from .kbc import KeypointSet
from .tensor_ops import bilinear_resize
from .tensorfile import write_tensor

OBJECT_SIDE_RANGE = (48, 96)   # < 40% of a 256 frame
CLUSTER_RADIUS = 8.0
CLUSTER_MIN_GAP = 5.0          # below the 16px stride, above what toy features resolve
CLUSTER_POINTS = 4
SPREAD_MARGIN = 8.0
KEYPOINTS_PER_PAIR = 8


def _smooth_field(rng: np.random.Generator, h: int, w: int, cells: int,
                  contrast: float, dtype=np.float32) -> np.ndarray:
    base = rng.standard_normal((3, cells, cells)).astype(dtype)
    field = bilinear_resize(base, h, w)
    return np.clip(0.5 + contrast * field, 0.0, 1.0)


def _cluster_points(rng: np.random.Generator, center: np.ndarray, radius: float,
                    count: int, min_gap: float = 2.5) -> list[np.ndarray]:
    points: list[np.ndarray] = []
    while len(points) < count:
        p = center + rng.uniform(-radius, radius, size=2)
        if all(np.linalg.norm(p - q) >= min_gap for q in points):
            points.append(p)
    return points


def make_pair(seed: int, index: int, size: int = 256):
    """One synthetic pair: images in [0,1], keypoints, boxes, the shift."""
    rng = np.random.default_rng([seed, index])
    side = int(rng.integers(OBJECT_SIDE_RANGE[0], OBJECT_SIDE_RANGE[1] + 1))
    texture = _smooth_field(rng, side, side, cells=6, contrast=0.35)

    margin = 4
    sx = int(rng.integers(margin, size - side - margin + 1))
    sy = int(rng.integers(margin, size - side - margin + 1))
    lo = margin - np.array([sx, sy])
    hi = size - side - margin - np.array([sx, sy])
    shift = np.array([
        int(rng.integers(lo[0], hi[0] + 1)),
        int(rng.integers(lo[1], hi[1] + 1)),
    ])
    tx, ty = sx + shift[0], sy + shift[1]

    src = _smooth_field(rng, size, size, cells=8, contrast=0.12)
    trg = _smooth_field(rng, size, size, cells=8, contrast=0.12)
    src[:, sy : sy + side, sx : sx + side] = texture
    trg[:, ty : ty + side, tx : tx + side] = texture

    # four spread points near the object quarters, four clustered below stride
    quarters = np.array([
        (0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)
    ]) * (side - 2 * SPREAD_MARGIN) + SPREAD_MARGIN
    spread = [q + rng.uniform(-3, 3, size=2) for q in quarters]
    center = np.array([side / 2.0, side / 2.0]) + rng.uniform(-4, 4, size=2)
    cluster = _cluster_points(rng, center, CLUSTER_RADIUS, CLUSTER_POINTS)
    local = np.stack(spread + cluster)
    src_points = local + np.array([sx, sy])
    trg_points = src_points + shift

    return {
        "src_image": src,
        "trg_image": trg,
        "src_keypoints": KeypointSet(points=src_points),
        "trg_keypoints": KeypointSet(points=trg_points),
        "src_bbox": (float(sx), float(sy), float(sx + side), float(sy + side)),
        "trg_bbox": (float(tx), float(ty), float(tx + side), float(ty + side)),
        "shift": (int(shift[0]), int(shift[1])),
        "side": side,
    }


def generate_benchmark(n_pairs: int, seed: int, size: int = 256):
    """In-memory benchmark: (annotations, images dict keyed by image id)."""
    if n_pairs < 1:
        raise ConfigError("need at least one pair")
    annotations = []
    images: dict[str, np.ndarray] = {}
    for i in range(n_pairs):
        pair = make_pair(seed, i, size)
        pair_id = f"pair{i:04d}"
        src_id, trg_id = f"{pair_id}_src", f"{pair_id}_trg"
        images[src_id] = pair["src_image"]
        images[trg_id] = pair["trg_image"]
        annotations.append(PairAnnotation(
            pair_id=pair_id,
            src_image=src_id,
            trg_image=trg_id,
            src_size=(size, size),
            trg_size=(size, size),
            src_keypoints=pair["src_keypoints"],
            trg_keypoints=pair["trg_keypoints"],
            category="synthetic-small-object",
            src_bbox=pair["src_bbox"],
            trg_bbox=pair["trg_bbox"],
        ))
    return annotations, images


def write_benchmark(out_dir, n_pairs: int, seed: int, size: int = 256) -> dict:
    """Materialise the benchmark: images/<id>.kbct plus annotations.jsonl."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    annotations, images = generate_benchmark(n_pairs, seed, size)
    for image_id, array in sorted(images.items()):
        write_tensor(image_dir / f"{image_id}.kbct", array)
    write_annotations(out_dir / "annotations.jsonl", annotations)
    return {
        "pairs": n_pairs,
        "seed": seed,
        "size": size,
        "annotations": str(out_dir / "annotations.jsonl"),
        "images": str(image_dir),
    }


def make_shift_pairs(n_pairs: int, seed: int, csfa_weights: CsfaWeights,
                     image_size: int = 128, channels: int = 8,
                     stride: int = 16, extractor_seed: int | None = None):
    """Constant-shift training pairs: (correlation volume float64, target flow).

    Source and target are two stride-aligned crops of one smooth canvas, so
    target content is the source translated by an exact multiple of the feature
    stride; the supervision flow is that constant, masked to the cells whose
    target stays on the grid."""
    extractor_seed = seed if extractor_seed is None else extractor_seed
    rng = np.random.default_rng([seed, 7])
    grid = image_size // stride
    margin = 2 * stride
    pairs = []
    for _ in range(n_pairs):
        canvas = _smooth_field(rng, image_size + 2 * margin, image_size + 2 * margin,
                               cells=10, contrast=0.25)
        cells_dx, cells_dy = 0, 0
        while cells_dx == 0 and cells_dy == 0:
            cells_dx, cells_dy = rng.integers(-2, 3, size=2)
        px, py = cells_dx * stride, cells_dy * stride
        src = canvas[:, margin : margin + image_size, margin : margin + image_size]
        trg = canvas[:, margin - py : margin - py + image_size,
                     margin - px : margin - px + image_size]
        src_set = csfa_forward(toy_extract(src, extractor_seed, channels), csfa_weights)
        trg_set = csfa_forward(toy_extract(trg, extractor_seed, channels), csfa_weights)
        corr = build_corr4d(src_set, trg_set).astype(np.float64)

        values = np.zeros((2, grid, grid))
        values[0] = cells_dx
        values[1] = cells_dy
        ii, jj = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
        mask = ((jj + cells_dx >= 0) & (jj + cells_dx < grid)
                & (ii + cells_dy >= 0) & (ii + cells_dy < grid))
        pairs.append((corr, FlowMap(values=values, mask=mask)))
    return pairs
