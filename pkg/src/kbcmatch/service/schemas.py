"""Pydantic request/response models for the HTTP service.

Image tensors travel as base64-encoded tensor-file blobs, so the wire format
and the on-disk format are one and the same.
"""

from __future__ import annotations

import base64
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..annotations import PairAnnotation
from ..kbc import KeypointSet
from ..tensorfile import tensor_bytes, tensor_from_bytes


class TensorPayload(BaseModel):
    data_b64: str

    @classmethod
    def from_array(cls, array: np.ndarray) -> "TensorPayload":
        return cls(data_b64=base64.b64encode(tensor_bytes(array)).decode("ascii"))

    def to_array(self) -> np.ndarray:
        return tensor_from_bytes(base64.b64decode(self.data_b64))


class AnnotationModel(BaseModel):
    pair_id: str
    src_image: str
    trg_image: str
    src_size: tuple[int, int]
    trg_size: tuple[int, int]
    n: Optional[int] = None
    src_keypoints: list[tuple[float, float]]
    src_valid: Optional[list[bool]] = None
    trg_keypoints: Optional[list[tuple[float, float]]] = None
    trg_valid: Optional[list[bool]] = None
    category: str = "unknown"
    src_bbox: Optional[tuple[float, float, float, float]] = None
    trg_bbox: Optional[tuple[float, float, float, float]] = None

    def to_annotation(self) -> PairAnnotation:
        return PairAnnotation(
            pair_id=self.pair_id,
            src_image=self.src_image,
            trg_image=self.trg_image,
            src_size=tuple(self.src_size),
            trg_size=tuple(self.trg_size),
            src_keypoints=KeypointSet(points=np.asarray(self.src_keypoints), valid=self.src_valid),
            trg_keypoints=(
                KeypointSet(points=np.asarray(self.trg_keypoints), valid=self.trg_valid)
                if self.trg_keypoints is not None else None
            ),
            category=self.category,
            src_bbox=self.src_bbox,
            trg_bbox=self.trg_bbox,
        )

    @classmethod
    def from_record(cls, rec: dict) -> "AnnotationModel":
        return cls(**rec)


class TransformModel(BaseModel):
    scale: float = 1.0
    ox: float = 0.0
    oy: float = 0.0
    applied: bool = False


class PredictionModel(BaseModel):
    pair_id: str
    points_raw: list[tuple[float, float]]
    valid: list[bool]
    target_transform: TransformModel
    points: list[tuple[float, float]]
    source_transform: Optional[TransformModel] = None
    kbc_mode: Optional[str] = None
    passes: Optional[int] = None

    def to_record(self) -> dict:
        rec = self.model_dump(exclude_none=True)
        return rec


class InferRequest(BaseModel):
    pairs: list[AnnotationModel]
    images: dict[str, TensorPayload]
    kbc: Literal["off", "src", "trg", "src+trg"] = "src+trg"
    config: Optional[dict] = None


class InferResponse(BaseModel):
    predictions: list[PredictionModel]


class EvaluateRequest(BaseModel):
    annotations: list[AnnotationModel]
    predictions: list[PredictionModel]
    alphas: list[float] = Field(default=[0.05, 0.1, 0.15])
    alpha_reference: Literal["bbox", "img"] = "bbox"


class EvaluateResponse(BaseModel):
    report: list[dict]


class BenchRequest(BaseModel):
    shape: list[int] = Field(default=[1, 6, 16, 16, 16, 16])
    kernel: int = 3
    repeats: int = 21
    seed: int = 0


class GradcheckRequest(BaseModel):
    seed: int = 0
    step: float = 1e-4
    temperature: float = 0.05
    max_per_group: Optional[int] = None


class GradcheckResponse(BaseModel):
    max_rel_error: float
    per_group: dict[str, dict]
    checked: int
    kink_skipped: int


class SelftestResponse(BaseModel):
    results: list[dict]
    all_passed: bool


class SyntheticRequest(BaseModel):
    n_pairs: int = Field(default=4, ge=1, le=16)
    seed: int = 0
    size: int = 256


class SyntheticResponse(BaseModel):
    annotations: list[dict]
    images: dict[str, TensorPayload]


class HealthResponse(BaseModel):
    status: str
    version: str
