"""Keypoint-box-centered cropping geometry.

Small objects put their keypoints so close together that stride-16 features
fuse; the fix is geometric: enlarge the image until the minimum keypoint
separation reaches the feature stride, then crop a network-sized window
centered on the keypoint bounding box. Every move is recorded in an invertible
transform (p -> s*p - offset) so predictions made in the cropped frame can be
projected back to original coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .decoder import FlowMap, sample_flow_at
from .errors import ConfigError, NoValidKeypointsError, ShapeError
from .tensor_ops import bilinear_resize

MIN_SEPARATION = 16.0  # feature stride in pixels; the enlarge trigger
CONTEXT_MARGIN = 0.9   # scaled bbox must fit inside this fraction of the crop


@dataclass
class KeypointSet:
    """n annotated points (x right, y down, origin top-left) with a validity mask."""

    points: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.points.shape[0] < 1:
            raise NoValidKeypointsError("a keypoint set needs at least one point")
        if self.valid is None:
            self.valid = np.ones(self.points.shape[0], dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if self.valid.shape[0] != self.points.shape[0]:
            raise ShapeError(
                f"validity mask length {self.valid.shape[0]} != point count {self.points.shape[0]}"
            )

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def valid_points(self) -> np.ndarray:
        return self.points[self.valid]

    def replace_points(self, points: np.ndarray, valid: np.ndarray | None = None) -> "KeypointSet":
        return KeypointSet(points=points, valid=self.valid.copy() if valid is None else valid)


@dataclass
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ShapeError(f"degenerate box ordering: {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> tuple[float, float]:
        return (self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0


@dataclass
class KbcTransform:
    """Forward map p -> scale*p - (ox, oy); offsets live in the scaled frame."""

    scale: float = 1.0
    ox: float = 0.0
    oy: float = 0.0
    applied: bool = False

    def __post_init__(self):
        if self.scale < 1.0:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale - np.array([self.ox, self.oy])

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) + np.array([self.ox, self.oy])) / self.scale

    def to_record(self) -> dict:
        return {"scale": self.scale, "ox": self.ox, "oy": self.oy, "applied": self.applied}

    @classmethod
    def from_record(cls, rec: dict) -> "KbcTransform":
        return cls(scale=rec["scale"], ox=rec["ox"], oy=rec["oy"], applied=rec["applied"])


def get_bounding_box(pts: KeypointSet) -> BoundingBox:
    """Tight axis-aligned box over the valid points."""
    v = pts.valid_points
    if v.shape[0] == 0:
        raise NoValidKeypointsError("bounding box of an empty keypoint set")
    return BoundingBox(
        xmin=float(v[:, 0].min()), ymin=float(v[:, 1].min()),
        xmax=float(v[:, 0].max()), ymax=float(v[:, 1].max()),
    )


def min_pairwise_distance(pts: KeypointSet) -> float:
    """Minimum Euclidean distance over valid pairs; +inf with fewer than two
    valid points (which forces the direct-crop branch)."""
    v = pts.valid_points
    if v.shape[0] < 2:
        return float("inf")
    diff = v[:, None, :] - v[None, :, :]
    d2 = (diff ** 2).sum(axis=2)
    iu = np.triu_indices(v.shape[0], k=1)
    return float(np.sqrt(d2[iu].min()))


def contains_small_object(pts: KeypointSet, input_w: float, input_h: float,
                          threshold: float) -> bool:
    """Small-object gate: r = max(w_box/w, h_box/h) strictly below the threshold."""
    if input_w <= 0 or input_h <= 0:
        raise ConfigError(f"input extents must be positive, got {input_w}x{input_h}")
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    box = get_bounding_box(pts)
    r = max(box.width / input_w, box.height / input_h)
    return r < threshold


def center_crop(image: np.ndarray, pts: KeypointSet, center: tuple[float, float],
                out_w: int, out_h: int):
    """Crop an (out_w, out_h) window centered as close to ``center`` as the
    image allows; returns (crop, shifted keypoints, transform)."""
    if image.ndim != 3:
        raise ShapeError(f"image must be (C,H,W), got {image.shape}")
    _, h, w = image.shape
    if out_w > w or out_h > h:
        raise ShapeError(
            f"crop {out_w}x{out_h} larger than image {w}x{h}; resize first"
        )
    ox = int(round(center[0] - out_w / 2.0))
    oy = int(round(center[1] - out_h / 2.0))
    ox = min(max(ox, 0), w - out_w)
    oy = min(max(oy, 0), h - out_h)
    crop = image[:, oy : oy + out_h, ox : ox + out_w].copy()
    transform = KbcTransform(scale=1.0, ox=float(ox), oy=float(oy), applied=True)
    shifted = pts.replace_points(transform.apply(pts.points))
    return crop, shifted, transform


def kbc_scale(pts: KeypointSet, min_dis: float, out_w: int, out_h: int,
              min_separation: float = MIN_SEPARATION) -> float:
    """Enlargement factor: reach the stride-sized separation, capped so the
    keypoint box keeps a context margin inside the crop, floored at 1."""
    box = get_bounding_box(pts)
    caps = []
    if box.width > 0:
        caps.append(CONTEXT_MARGIN * out_w / box.width)
    if box.height > 0:
        caps.append(CONTEXT_MARGIN * out_h / box.height)
    s_max = min(caps) if caps else float("inf")
    if min_dis > 0:
        s = min(min_separation / min_dis, s_max)
    else:
        warnings.warn("duplicate keypoints can never be separated; scale capped at the context limit")
        s = s_max
    if not np.isfinite(s):
        s = 1.0
    return float(max(s, 1.0))


def scaled_extents(h: int, w: int, s: float) -> tuple[int, int]:
    """Output extents of an align-corners resize by factor ``s``."""
    new_h = int(round(s * (h - 1))) + 1 if h > 1 else 1
    new_w = int(round(s * (w - 1))) + 1 if w > 1 else 1
    return new_h, new_w


def resize_for_kbc(image: np.ndarray, pts: KeypointSet, min_dis: float,
                   out_w: int, out_h: int, min_separation: float = MIN_SEPARATION):
    """Enlarge image + keypoints by the KBC scale rule."""
    s = kbc_scale(pts, min_dis, out_w, out_h, min_separation)
    _, h, w = image.shape
    new_h, new_w = scaled_extents(h, w, s)
    resized = bilinear_resize(image, new_h, new_w)
    scaled = pts.replace_points(pts.points * s)
    return resized, scaled, s


def _resized_window(image: np.ndarray, new_h: int, new_w: int,
                    ox: int, oy: int, out_w: int, out_h: int) -> np.ndarray:
    """The (out_h, out_w) window at (ox, oy) of the align-corners resize of
    ``image`` to (new_h, new_w), sampled directly so the full resized image is
    never materialised (scales can be large when predicted boxes are tiny)."""
    _, h, w = image.shape
    ys = (np.arange(oy, oy + out_h, dtype=np.float64) * ((h - 1) / (new_h - 1))
          if new_h > 1 else np.zeros(out_h))
    xs = (np.arange(ox, ox + out_w, dtype=np.float64) * ((w - 1) / (new_w - 1))
          if new_w > 1 else np.zeros(out_w))
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bot = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(image.dtype, copy=False)


def kbc_preprocess(image: np.ndarray, pts: KeypointSet, out_w: int, out_h: int,
                   min_separation: float = MIN_SEPARATION):
    """Two-branch crop procedure: direct center crop when keypoints are already
    separated by more than the stride, otherwise enlarge first, then crop around
    the (re-computed) keypoint box center. Returns (image, keypoints, transform)
    with the composed transform."""
    box = get_bounding_box(pts)
    min_dis = min_pairwise_distance(pts)
    if min_dis > min_separation:
        crop, shifted, t = center_crop(image, pts, box.center, out_w, out_h)
        return crop, shifted, t

    s = kbc_scale(pts, min_dis, out_w, out_h, min_separation)
    _, h, w = image.shape
    new_h, new_w = scaled_extents(h, w, s)
    if out_w > new_w or out_h > new_h:
        raise ShapeError(
            f"crop {out_w}x{out_h} larger than resized image {new_w}x{new_h}; resize first"
        )
    scaled = pts.replace_points(pts.points * s)
    cx, cy = get_bounding_box(scaled).center
    ox = min(max(int(round(cx - out_w / 2.0)), 0), new_w - out_w)
    oy = min(max(int(round(cy - out_h / 2.0)), 0), new_h - out_h)
    crop = _resized_window(image, new_h, new_w, ox, oy, out_w, out_h)
    transform = KbcTransform(scale=s, ox=float(ox), oy=float(oy), applied=True)
    shifted = pts.replace_points(transform.apply(pts.points))
    return crop, shifted, transform


def keypoints_from_flow(flow: FlowMap, src_pts: KeypointSet, stride: float = 16.0) -> KeypointSet:
    """Read predicted target pixels off a flow map: bilinear-sample the flow at
    each source point's grid position and add the displacement in pixels.
    Out-of-image source points sample with clamping and are flagged invalid."""
    h, w = flow.grid
    points = np.zeros_like(src_pts.points)
    valid = src_pts.valid.copy()
    for i, (x, y) in enumerate(src_pts.points):
        in_bounds = 0 <= x < w * stride and 0 <= y < h * stride
        if not in_bounds:
            valid[i] = False
        dx, dy = sample_flow_at(flow, x / stride, y / stride)
        points[i, 0] = x + stride * dx
        points[i, 1] = y + stride * dy
    return KeypointSet(points=points, valid=valid)
