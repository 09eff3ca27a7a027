"""Line-delimited record formats: pair annotations, predictions, reports.

Every file is JSONL (one JSON object per line, keys sorted, coordinates
rounded to 1e-6) so outputs are diffable and byte-deterministic for a fixed
seed. Field lists are frozen; see the README for the exact schemas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnnotationError
from .kbc import KeypointSet


def _round6(x: float) -> float:
    return round(float(x), 6)


def points_to_json(points: np.ndarray) -> list:
    return [[_round6(x), _round6(y)] for x, y in np.asarray(points).reshape(-1, 2)]


def keypoints_to_json(pts: KeypointSet) -> tuple[list, list]:
    return points_to_json(pts.points), [bool(v) for v in pts.valid]


def keypoints_from_json(points: list, valid: list | None) -> KeypointSet:
    return KeypointSet(points=np.asarray(points, dtype=np.float64), valid=valid)


@dataclass
class PairAnnotation:
    """One annotated image pair; sizes are (width, height), boxes are
    [xmin, ymin, xmax, ymax] and optional (needed only for box-referenced PCK)."""

    pair_id: str
    src_image: str
    trg_image: str
    src_size: tuple[int, int]
    trg_size: tuple[int, int]
    src_keypoints: KeypointSet
    trg_keypoints: KeypointSet | None = None
    category: str = "unknown"
    src_bbox: tuple | None = None
    trg_bbox: tuple | None = None

    def __post_init__(self):
        if self.trg_keypoints is not None and len(self.trg_keypoints) != len(self.src_keypoints):
            raise AnnotationError(
                f"{self.pair_id}: keypoint counts differ "
                f"({len(self.src_keypoints)} vs {len(self.trg_keypoints)})"
            )
        for name, size, pts in (
            ("src", self.src_size, self.src_keypoints),
            ("trg", self.trg_size, self.trg_keypoints),
        ):
            if pts is None:
                continue
            w, h = size
            p = pts.points
            inside = (p[:, 0] >= 0) & (p[:, 0] < w) & (p[:, 1] >= 0) & (p[:, 1] < h)
            bad = pts.valid & ~inside
            if bad.any():
                raise AnnotationError(
                    f"{self.pair_id}: {name} keypoints outside the stated {w}x{h} extents "
                    f"must be flagged invalid (offenders: {np.where(bad)[0].tolist()})"
                )

    @property
    def n(self) -> int:
        return len(self.src_keypoints)

    def to_record(self) -> dict:
        sp, sv = keypoints_to_json(self.src_keypoints)
        rec = {
            "pair_id": self.pair_id,
            "category": self.category,
            "src_image": self.src_image,
            "trg_image": self.trg_image,
            "src_size": list(self.src_size),
            "trg_size": list(self.trg_size),
            "n": self.n,
            "src_keypoints": sp,
            "src_valid": sv,
        }
        if self.trg_keypoints is not None:
            tp, tv = keypoints_to_json(self.trg_keypoints)
            rec["trg_keypoints"] = tp
            rec["trg_valid"] = tv
        if self.src_bbox is not None:
            rec["src_bbox"] = [_round6(v) for v in self.src_bbox]
        if self.trg_bbox is not None:
            rec["trg_bbox"] = [_round6(v) for v in self.trg_bbox]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "PairAnnotation":
        try:
            src_kp = keypoints_from_json(rec["src_keypoints"], rec.get("src_valid"))
            trg_kp = None
            if "trg_keypoints" in rec:
                trg_kp = keypoints_from_json(rec["trg_keypoints"], rec.get("trg_valid"))
            ann = cls(
                pair_id=rec["pair_id"],
                src_image=rec["src_image"],
                trg_image=rec["trg_image"],
                src_size=tuple(rec["src_size"]),
                trg_size=tuple(rec["trg_size"]),
                src_keypoints=src_kp,
                trg_keypoints=trg_kp,
                category=rec.get("category", "unknown"),
                src_bbox=tuple(rec["src_bbox"]) if rec.get("src_bbox") else None,
                trg_bbox=tuple(rec["trg_bbox"]) if rec.get("trg_bbox") else None,
            )
        except KeyError as exc:
            raise AnnotationError(f"annotation record missing field {exc}") from exc
        if "n" in rec and rec["n"] != ann.n:
            raise AnnotationError(
                f"{ann.pair_id}: stated n={rec['n']} != keypoint count {ann.n}"
            )
        return ann


def dump_records(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def write_records(path, records: list[dict]) -> None:
    Path(path).write_text(dump_records(records), encoding="utf-8")


def read_records(path) -> list[dict]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{path}:{i + 1}: bad JSON record: {exc}") from exc
    return out


def read_annotations(path) -> list[PairAnnotation]:
    return [PairAnnotation.from_record(r) for r in read_records(path)]


def write_annotations(path, annotations: list[PairAnnotation]) -> None:
    write_records(path, [a.to_record() for a in annotations])
