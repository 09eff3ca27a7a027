"""kbcmatch: semantic keypoint correspondence with crop-gated inference.

Core pieces: a cross-scale attention fusion of a three-level feature pyramid,
6-channel 4D cosine-correlation volumes, a center-pivot factorised 4D
convolution decoder with soft-argmax flow readout, and the keypoint-box-
centered cropping procedure that enlarges small objects at inference time.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .csfa import AlignedFeatureSet, CsfaWeights, FeaturePyramid, csfa_forward
from .correlation import build_corr4d, cosine_correlation
from .conv4d import CenterPivotKernel, center_pivot_conv4d, dense_conv4d, embed_center_pivot
from .decoder import DecoderWeights, FlowMap, decoder_forward, flow_from_correlation
from .kbc import (
    BoundingBox,
    KbcTransform,
    KeypointSet,
    contains_small_object,
    get_bounding_box,
    kbc_preprocess,
    keypoints_from_flow,
    min_pairwise_distance,
)
from .metrics import EvalRecord, aepe_loss, build_gt_flow, pck
from .pipeline import InferenceResult, ModelWeights, run_inference
from .training import decoder_backward, gradcheck, train_toy

__all__ = [
    "AlignedFeatureSet", "BoundingBox", "CenterPivotKernel", "CsfaWeights",
    "DecoderWeights", "EvalRecord", "FeaturePyramid", "FlowMap",
    "InferenceResult", "KbcTransform", "KeypointSet", "ModelWeights",
    "RunConfig", "aepe_loss", "build_corr4d", "build_gt_flow",
    "center_pivot_conv4d", "contains_small_object", "cosine_correlation",
    "csfa_forward", "decoder_backward", "decoder_forward", "dense_conv4d",
    "embed_center_pivot", "flow_from_correlation", "get_bounding_box",
    "gradcheck", "kbc_preprocess", "keypoints_from_flow",
    "min_pairwise_distance", "pck", "run_inference", "train_toy",
]
