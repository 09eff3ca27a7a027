"""End-to-end matching pipeline and the two-pass crop-gated inference.

A single network pass is: feature pyramids for both images -> cross-scale
alignment -> 6-channel correlation volume -> decoder -> soft-argmax flow ->
keypoint readout. Inference wraps that pass with two small-object gates: if
the source keypoint box is small, the source image is enlarged/cropped before
the first pass; if the *predicted* target keypoints then indicate a small
object, the target is enlarged/cropped around them and the pass is re-run.
Predictions made in a cropped target frame are projected back through the
recorded inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .correlation import build_corr4d
from .csfa import AlignedFeatureSet, CsfaWeights, csfa_forward
from .decoder import DecoderWeights, decoder_forward, soft_argmax_flow
from .errors import PipelineError, ShapeError
from .features import transform_digest
from .kbc import (
    KbcTransform,
    KeypointSet,
    contains_small_object,
    kbc_preprocess,
    keypoints_from_flow,
)


@dataclass
class ModelWeights:
    """Everything learned: alignment weights plus decoder weights."""

    csfa: CsfaWeights
    decoder: DecoderWeights

    @classmethod
    def seeded(cls, seed: int, channels: int = 16, csfa_scale: float = 0.5,
               decoder_scale: float = 1.0) -> "ModelWeights":
        return cls(
            csfa=CsfaWeights.seeded(channels, seed, scale=csfa_scale),
            decoder=DecoderWeights.seeded(seed + 1, scale=decoder_scale),
        )

    def param_items(self):
        for name, value in self.csfa.param_items():
            yield f"csfa.{name}", value
        for name, value in self.decoder.param_items():
            yield f"decoder.{name}", value

    @classmethod
    def from_params(cls, params: dict) -> "ModelWeights":
        csfa_params = {k[len("csfa."):]: v for k, v in params.items() if k.startswith("csfa.")}
        dec_params = {k[len("decoder."):]: v for k, v in params.items() if k.startswith("decoder.")}
        return cls(csfa=CsfaWeights.from_params(csfa_params),
                   decoder=DecoderWeights.from_params(dec_params))

    def save(self, path) -> None:
        from .tensorfile import write_named_tensors

        write_named_tensors(path, dict(self.param_items()))

    @classmethod
    def load(cls, path) -> "ModelWeights":
        from .tensorfile import read_named_tensors

        return cls.from_params(read_named_tensors(path))

    @classmethod
    def inference_default(cls, seed: int, channels: int = 16) -> "ModelWeights":
        """Untrained default: seeded alignment weights (residual-dominated) and
        the deterministic peak-preserving decoder."""
        return cls(csfa=CsfaWeights.seeded(channels, seed, scale=0.5),
                   decoder=DecoderWeights.passthrough())


@dataclass
class InferenceResult:
    """Predictions plus the provenance needed for back-projection and reports."""

    predictions: KeypointSet            # original target frame
    raw_predictions: KeypointSet        # frame of the (possibly cropped) target
    target_transform: KbcTransform
    source_transform: KbcTransform
    passes: int


class PairMatcher:
    """One network pass, with memoisation of aligned feature sets by cache key."""

    def __init__(self, provider, weights: ModelWeights, cfg: RunConfig):
        self.provider = provider
        self.weights = weights
        self.cfg = cfg
        self._aligned: dict[str, AlignedFeatureSet] = {}

    def aligned_features(self, image: np.ndarray, key: str | None) -> AlignedFeatureSet:
        if key is not None and key in self._aligned:
            return self._aligned[key]
        try:
            pyramid = self.provider(image, key)
        except Exception as exc:  # provider failures get a stage tag
            if isinstance(exc, PipelineError):
                raise
            raise PipelineError("features", str(exc)) from exc
        aligned = csfa_forward(pyramid, self.weights.csfa)
        if key is not None:
            self._aligned[key] = aligned
        return aligned

    def predict(self, src_image: np.ndarray, trg_image: np.ndarray, src_pts: KeypointSet,
                src_key: str | None = None, trg_key: str | None = None) -> KeypointSet:
        src_set = self.aligned_features(src_image, src_key)
        trg_set = self.aligned_features(trg_image, trg_key)
        corr = build_corr4d(src_set, trg_set)
        refined = decoder_forward(corr, self.weights.decoder)
        flow = soft_argmax_flow(refined, self.cfg.temperature)
        return keypoints_from_flow(flow, src_pts, stride=float(self.cfg.stride))


def _cache_key(image_id: str | None, transform: KbcTransform) -> str | None:
    if image_id is None:
        return None
    return f"{image_id}@{transform_digest(transform)}"


def run_inference(src_image: np.ndarray, trg_image: np.ndarray, src_pts: KeypointSet,
                  provider, weights: ModelWeights, threshold: float,
                  cfg: RunConfig | None = None, kbc_mode: str | None = None,
                  src_id: str | None = None, trg_id: str | None = None,
                  matcher: PairMatcher | None = None,
                  single_pass=None) -> InferenceResult:
    """Crop-gated two-pass inference for one image pair.

    ``threshold`` is the small-object gate ratio; 0 disables both gates (the
    box ratio is never strictly below 0). ``single_pass`` replaces the network
    pass in tests. Both images must already be at the network input size.
    """
    cfg = cfg or RunConfig()
    mode = kbc_mode or cfg.kbc_mode
    size = cfg.input_size
    for name, img in (("source", src_image), ("target", trg_image)):
        if img.shape != (3, size, size):
            raise ShapeError(
                f"{name} image must be (3,{size},{size}) at inference time, got {img.shape}"
            )
    if matcher is None and single_pass is None:
        matcher = PairMatcher(provider, weights, cfg)

    def network(s_img, t_img, pts, s_key, t_key):
        if single_pass is not None:
            return single_pass(s_img, t_img, pts)
        return matcher.predict(s_img, t_img, pts, s_key, t_key)

    def gate(pts: KeypointSet) -> bool:
        return bool(pts.valid.any()) and contains_small_object(pts, size, size, threshold)

    src_t = KbcTransform()
    if mode in ("src", "src+trg") and threshold > 0 and gate(src_pts):
        src_image, src_pts, src_t = kbc_preprocess(
            src_image, src_pts, size, size, cfg.min_separation
        )

    src_key = _cache_key(src_id, src_t)
    trg_t = KbcTransform()
    raw = network(src_image, trg_image, src_pts, src_key, _cache_key(trg_id, trg_t))
    passes = 1

    if mode in ("trg", "src+trg") and threshold > 0 and gate(raw):
        trg_image, _, trg_t = kbc_preprocess(trg_image, raw, size, size, cfg.min_separation)
        raw = network(src_image, trg_image, src_pts, src_key, _cache_key(trg_id, trg_t))
        passes = 2

    final = raw.replace_points(trg_t.invert(raw.points)) if trg_t.applied else raw
    return InferenceResult(
        predictions=final,
        raw_predictions=raw,
        target_transform=trg_t,
        source_transform=src_t,
        passes=passes,
    )
