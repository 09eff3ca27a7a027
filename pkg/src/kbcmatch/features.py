"""Toy feature extraction and feature providers.

The real system would use a pretrained convolutional backbone; here a seeded
fixed-weight extractor stands in: three strided convolution stages with ReLU,
yielding C/2C/4C channels at strides 8/16/32. Each stage is a box blur (an
overlapping receptive field, so descriptors vary smoothly under sub-stride
shifts) followed by a stride-matched patch projection whose rows are zero-mean
(otherwise the shared DC component makes every pair of cells look alike under
cosine similarity). Blur + patchify + mix composes into one fixed strided
convolution, so stages stay exactly shift-equivariant for shifts that are
multiples of the stride, which the tests rely on.

A provider is any callable (image, cache_key) -> FeaturePyramid. Two are
shipped: the in-process toy extractor (with an optional memo keyed by image id
+ transform digest, since KBC re-extracts features of cropped images) and a
reader of pre-extracted feature files in the repo tensor format.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .csfa import FeaturePyramid
from .errors import ConfigError, ShapeError
from .tensor_ops import relu
from .tensorfile import read_tensor, write_tensor

DEFAULT_CHANNELS = 16
BLUR_SIZES = (9, 3, 3)  # per stage, in input-grid units


def _patchify(grid: np.ndarray, k: int) -> np.ndarray:
    """(C,H,W) -> (H/k * W/k, C*k*k) token matrix of non-overlapping patches."""
    c, h, w = grid.shape
    blocks = grid.reshape(c, h // k, k, w // k, k)
    return blocks.transpose(1, 3, 0, 2, 4).reshape((h // k) * (w // k), c * k * k)


def _tokens_to_grid(tokens: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return tokens.reshape(rows, cols, -1).transpose(2, 0, 1)


def _blur(grid: np.ndarray, size: int) -> np.ndarray:
    if size <= 1:
        return grid
    return uniform_filter(grid, size=(1, size, size), mode="nearest")


def extractor_weights(seed: int, channels: int = DEFAULT_CHANNELS, dtype=np.float32) -> dict:
    """Deterministic stage weights; independent of the image extents.

    Rows are centered over the fan-in so features ignore the patch-constant
    component (brightness) and respond to local contrast instead."""
    rng = np.random.default_rng(seed)

    def stage(dout, din):
        w = rng.standard_normal((dout, din))
        w -= w.mean(axis=1, keepdims=True)
        return (w / np.sqrt(din)).astype(dtype)

    return {
        "stage1": stage(channels, 3 * 8 * 8),
        "stage2": stage(2 * channels, channels * 2 * 2),
        "stage3": stage(4 * channels, 2 * channels * 2 * 2),
    }


def toy_extract(image: np.ndarray, seed: int, channels: int = DEFAULT_CHANNELS,
                weights: dict | None = None) -> FeaturePyramid:
    """Seeded deterministic pyramid for a (3,H,W) image with H, W divisible by 32."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"image must be (3,H,W), got {image.shape}")
    _, h, w = image.shape
    if h % 32 or w % 32:
        raise ConfigError(f"image extents must be divisible by 32, got {h}x{w}")
    w_ = weights or extractor_weights(seed, channels, dtype=image.dtype)

    fine = relu(_patchify(_blur(image, BLUR_SIZES[0]), 8) @ w_["stage1"].T)
    grid1 = _tokens_to_grid(fine, h // 8, w // 8)
    mid = relu(_patchify(_blur(grid1, BLUR_SIZES[1]), 2) @ w_["stage2"].T)
    grid2 = _tokens_to_grid(mid, h // 16, w // 16)
    coarse = relu(_patchify(_blur(grid2, BLUR_SIZES[2]), 2) @ w_["stage3"].T)
    return FeaturePyramid(fine=fine, mid=mid, coarse=coarse, height=h, width=w)


def transform_digest(transform) -> str:
    """Short stable digest of a crop/scale transform, for feature cache keys."""
    rec = transform.to_record() if hasattr(transform, "to_record") else dict(transform)
    canon = json.dumps(rec, sort_keys=True)
    return hashlib.sha1(canon.encode()).hexdigest()[:12]


class ToyFeatureProvider:
    """In-process provider around ``toy_extract`` with an optional memo.

    Cache keys are caller-supplied (image id + transform digest); a ``None``
    key always recomputes. The memo never changes results, it only skips
    recomputing pyramids for images the pipeline sees repeatedly.
    """

    def __init__(self, seed: int, channels: int = DEFAULT_CHANNELS, cache: bool = True):
        self.seed = seed
        self.channels = channels
        self.weights32 = extractor_weights(seed, channels, dtype=np.float32)
        self._memo: dict[str, FeaturePyramid] = {} if cache else None

    def __call__(self, image: np.ndarray, key: str | None = None) -> FeaturePyramid:
        if key is not None and self._memo is not None and key in self._memo:
            return self._memo[key]
        weights = self.weights32 if image.dtype == np.float32 else None
        pyr = toy_extract(image, self.seed, self.channels, weights=weights)
        if key is not None and self._memo is not None:
            self._memo[key] = pyr
        return pyr


LEVEL_NAMES = ("fine", "mid", "coarse")


def write_feature_cache(root, key: str, pyr: FeaturePyramid) -> None:
    """Persist one pyramid as three tensor files plus an index entry."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for level in LEVEL_NAMES:
        write_tensor(root / f"{key}.{level}.kbct", getattr(pyr, level))
    index_path = root / "index.jsonl"
    entry = {"key": key, "height": pyr.height, "width": pyr.width}
    with open(index_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


class FileFeatureProvider:
    """Provider over pre-extracted feature files; raises if a key is missing.

    The image tensor argument is accepted for interface compatibility but the
    lookup is purely by key, so cached features must cover every image and
    transform the pipeline will request.
    """

    def __init__(self, root):
        self.root = Path(root)
        index_path = self.root / "index.jsonl"
        if not index_path.exists():
            raise ConfigError(f"feature cache index not found: {index_path}")
        self.index: dict[str, dict] = {}
        for line in index_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                self.index[entry["key"]] = entry

    def __call__(self, image: np.ndarray, key: str | None = None) -> FeaturePyramid:
        if key is None or key not in self.index:
            raise ConfigError(f"no cached features for key '{key}'")
        entry = self.index[key]
        levels = {
            level: read_tensor(self.root / f"{key}.{level}.kbct") for level in LEVEL_NAMES
        }
        return FeaturePyramid(height=entry["height"], width=entry["width"], **levels)
