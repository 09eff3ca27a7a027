"""Run configuration and dataset presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

# crop-gate thresholds tuned per benchmark family
DATASET_THRESHOLDS = {
    "pf-pascal": 0.7,
    "pf-willow": 0.9,
    "spair-71k": 0.8,
}

KBC_MODES = ("off", "src", "trg", "src+trg")


@dataclass
class RunConfig:
    input_size: int = 256
    kbc_threshold: float = 0.8
    alphas: tuple = (0.05, 0.1, 0.15)
    stride: int = 16
    min_separation: float = 16.0
    temperature: float = 0.05
    seed: int = 0
    feature_channels: int = 16
    kbc_mode: str = "src+trg"
    alpha_reference: str = "bbox"  # "bbox" | "img"

    def __post_init__(self):
        if self.input_size <= 0 or self.input_size % 32:
            raise ConfigError(f"input size must be a positive multiple of 32, got {self.input_size}")
        if not 0 <= self.kbc_threshold <= 1:
            raise ConfigError(f"kbc threshold must be in [0, 1], got {self.kbc_threshold}")
        if self.stride <= 0 or self.min_separation <= 0 or self.temperature <= 0:
            raise ConfigError("stride, min separation and temperature must be positive")
        if any(a <= 0 for a in self.alphas):
            raise ConfigError(f"alphas must be positive, got {self.alphas}")
        if self.kbc_mode not in KBC_MODES:
            raise ConfigError(f"kbc mode must be one of {KBC_MODES}, got '{self.kbc_mode}'")
        if self.alpha_reference not in ("bbox", "img"):
            raise ConfigError(f"alpha reference must be 'bbox' or 'img', got '{self.alpha_reference}'")
        if self.feature_channels <= 0:
            raise ConfigError("feature channels must be positive")
        self.alphas = tuple(float(a) for a in self.alphas)

    @property
    def grid(self) -> tuple[int, int]:
        return self.input_size // self.stride, self.input_size // self.stride

    def for_dataset(self, name: str) -> "RunConfig":
        key = name.lower()
        if key not in DATASET_THRESHOLDS:
            raise ConfigError(f"unknown dataset '{name}'; presets: {sorted(DATASET_THRESHOLDS)}")
        return replace(self, kbc_threshold=DATASET_THRESHOLDS[key])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "alphas" in data:
            data = dict(data, alphas=tuple(data["alphas"]))
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
