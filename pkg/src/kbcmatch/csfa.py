"""Cross-scale feature alignment.

Fuses a three-level feature pyramid (strides 8/16/32) into six token maps on
the stride-16 grid: the stride-16 map attends to the fine (stride-8) and
coarse (stride-32) maps through single-head cross-attention blocks, updates
itself through a self-attention block, each result is refined by one more
self-attention block, and the raw pyramid levels are bilinearly resampled onto
the same grid. The fixed output order is

    [fine_fused, coarse_fused, self_updated, fine_resized, mid_identity, coarse_resized]

Every block is residual: with all projection and MLP weights zero it is the
identity on its query input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor_ops as T
from .errors import ShapeError

FEATURE_LIST_SIZE = 6


@dataclass
class FeaturePyramid:
    """Token-major backbone features: fine (H/8*W/8, C), mid (H/16*W/16, 2C),
    coarse (H/32*W/32, 4C); ``height``/``width`` are the source image extents."""

    fine: np.ndarray
    mid: np.ndarray
    coarse: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        if self.height % 32 or self.width % 32:
            raise ShapeError(
                f"image extents must be divisible by 32, got {self.height}x{self.width}"
            )
        for name, stride in (("fine", 8), ("mid", 16), ("coarse", 32)):
            feat = getattr(self, name)
            expected = (self.height // stride) * (self.width // stride)
            if feat.ndim != 2 or feat.shape[0] != expected:
                raise ShapeError(
                    f"{name} token axis: expected {expected} tokens, got {feat.shape}"
                )
        c = self.channels
        if self.mid.shape[1] != 2 * c or self.coarse.shape[1] != 4 * c:
            raise ShapeError(
                "channel widths must follow the C/2C/4C ladder, got "
                f"{self.fine.shape[1]}/{self.mid.shape[1]}/{self.coarse.shape[1]}"
            )

    @property
    def channels(self) -> int:
        return self.fine.shape[1]

    @property
    def grid(self) -> tuple[int, int]:
        """Stride-16 anchor grid (rows, cols)."""
        return self.height // 16, self.width // 16


@dataclass
class AlignedFeatureSet:
    """Six aligned token maps, all (H/16*W/16, 2C), in the canonical order above."""

    features: list
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if len(self.features) != FEATURE_LIST_SIZE:
            raise ShapeError(f"expected {FEATURE_LIST_SIZE} features, got {len(self.features)}")
        shape = self.features[0].shape
        for i, f in enumerate(self.features):
            if f.shape != shape:
                raise ShapeError(f"feature {i} shape {f.shape} != {shape}")
        if shape[0] != self.grid_h * self.grid_w:
            raise ShapeError(
                f"token count {shape[0]} does not match grid {self.grid_h}x{self.grid_w}"
            )


@dataclass
class AttentionBlockWeights:
    """One residual attention block: q/k/v/output projections plus a two-layer
    GELU MLP, all at model width d (hidden 4d)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray

    @classmethod
    def zeros(cls, dim: int, dtype=np.float32) -> "AttentionBlockWeights":
        hidden = 4 * dim
        z = lambda *s: np.zeros(s, dtype=dtype)
        return cls(
            wq=z(dim, dim), wk=z(dim, dim), wv=z(dim, dim), wo=z(dim, dim),
            bq=z(dim), bk=z(dim), bv=z(dim), bo=z(dim),
            mlp_w1=z(hidden, dim), mlp_b1=z(hidden),
            mlp_w2=z(dim, hidden), mlp_b2=z(dim),
        )

    @classmethod
    def seeded(cls, dim: int, rng: np.random.Generator, scale: float = 1.0,
               dtype=np.float32) -> "AttentionBlockWeights":
        hidden = 4 * dim

        def mat(dout, din):
            return (rng.standard_normal((dout, din)) * scale / np.sqrt(din)).astype(dtype)

        z = lambda n: np.zeros(n, dtype=dtype)
        return cls(
            wq=mat(dim, dim), wk=mat(dim, dim), wv=mat(dim, dim), wo=mat(dim, dim),
            bq=z(dim), bk=z(dim), bv=z(dim), bo=z(dim),
            mlp_w1=mat(hidden, dim), mlp_b1=z(hidden),
            mlp_w2=mat(dim, hidden), mlp_b2=z(dim),
        )

    def param_items(self, prefix: str):
        for f in fields(self):
            yield f"{prefix}.{f.name}", getattr(self, f.name)


BLOCK_NAMES = ("cross_fine", "cross_coarse", "self_mid",
               "refine_fine", "refine_coarse", "refine_self")


@dataclass
class CsfaWeights:
    """Channel-align maps for the fine/coarse levels plus six independently
    parameterised attention blocks (two cross, one self, three refinement)."""

    align_fine_w: np.ndarray      # (2C, C)
    align_fine_b: np.ndarray
    align_coarse_w: np.ndarray    # (2C, 4C)
    align_coarse_b: np.ndarray
    blocks: dict = field(default_factory=dict)  # name -> AttentionBlockWeights

    def __post_init__(self):
        missing = [n for n in BLOCK_NAMES if n not in self.blocks]
        if missing:
            raise ShapeError(f"missing attention blocks: {missing}")

    @property
    def model_dim(self) -> int:
        return self.align_fine_w.shape[0]

    @classmethod
    def zeros(cls, channels: int, dtype=np.float32) -> "CsfaWeights":
        d = 2 * channels
        return cls(
            align_fine_w=np.zeros((d, channels), dtype=dtype),
            align_fine_b=np.zeros(d, dtype=dtype),
            align_coarse_w=np.zeros((d, 4 * channels), dtype=dtype),
            align_coarse_b=np.zeros(d, dtype=dtype),
            blocks={n: AttentionBlockWeights.zeros(d, dtype) for n in BLOCK_NAMES},
        )

    @classmethod
    def seeded(cls, channels: int, seed: int, scale: float = 1.0,
               dtype=np.float32) -> "CsfaWeights":
        rng = np.random.default_rng(seed)
        d = 2 * channels
        return cls(
            align_fine_w=(rng.standard_normal((d, channels)) / np.sqrt(channels)).astype(dtype),
            align_fine_b=np.zeros(d, dtype=dtype),
            align_coarse_w=(rng.standard_normal((d, 4 * channels)) / np.sqrt(4 * channels)).astype(dtype),
            align_coarse_b=np.zeros(d, dtype=dtype),
            blocks={n: AttentionBlockWeights.seeded(d, rng, scale, dtype) for n in BLOCK_NAMES},
        )

    def param_items(self):
        yield "align_fine.weight", self.align_fine_w
        yield "align_fine.bias", self.align_fine_b
        yield "align_coarse.weight", self.align_coarse_w
        yield "align_coarse.bias", self.align_coarse_b
        for name in BLOCK_NAMES:
            yield from self.blocks[name].param_items(f"block.{name}")

    @classmethod
    def from_params(cls, params: dict) -> "CsfaWeights":
        blocks = {
            name: AttentionBlockWeights(**{
                f.name: params[f"block.{name}.{f.name}"]
                for f in fields(AttentionBlockWeights)
            })
            for name in BLOCK_NAMES
        }
        return cls(
            align_fine_w=params["align_fine.weight"],
            align_fine_b=params["align_fine.bias"],
            align_coarse_w=params["align_coarse.weight"],
            align_coarse_b=params["align_coarse.bias"],
            blocks=blocks,
        )


def attention_weights(query: np.ndarray, kv: np.ndarray, w: AttentionBlockWeights) -> np.ndarray:
    """The (Nq,Nk) attention matrix of a block: softmax(q k^T / sqrt(d))."""
    q = T.linear(query, w.wq, w.bq)
    k = T.linear(kv, w.wk, w.bk)
    return T.row_softmax(q @ k.T, scale=1.0 / np.sqrt(query.shape[-1]))


def cross_attention_block(query: np.ndarray, kv: np.ndarray, w: AttentionBlockWeights) -> np.ndarray:
    """Residual single-head attention + residual MLP: MLP(h) + h with
    h = Attn(query, kv) + query."""
    if query.shape[-1] != kv.shape[-1]:
        raise ShapeError(
            f"channel axis: query {query.shape[-1]} != key/value {kv.shape[-1]}"
        )
    attn = attention_weights(query, kv, w)
    v = T.linear(kv, w.wv, w.bv)
    h = T.linear(attn @ v, w.wo, w.bo) + query
    mlp = T.linear(T.gelu(T.linear(h, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2)
    return mlp + h


def self_attention_block(x: np.ndarray, w: AttentionBlockWeights) -> np.ndarray:
    return cross_attention_block(x, x, w)


def channel_align(pyr: FeaturePyramid, w: CsfaWeights) -> FeaturePyramid:
    """Map the fine and coarse levels to the mid channel width 2C; tokens untouched."""
    d = pyr.mid.shape[1]
    if w.align_fine_w.shape != (d, pyr.fine.shape[1]):
        raise ShapeError(
            f"fine align weight: expected {(d, pyr.fine.shape[1])}, got {w.align_fine_w.shape}"
        )
    if w.align_coarse_w.shape != (d, pyr.coarse.shape[1]):
        raise ShapeError(
            f"coarse align weight: expected {(d, pyr.coarse.shape[1])}, got {w.align_coarse_w.shape}"
        )
    fine = T.linear(pyr.fine, w.align_fine_w, w.align_fine_b)
    coarse = T.linear(pyr.coarse, w.align_coarse_w, w.align_coarse_b)
    return _AlignedPyramid(fine=fine, mid=pyr.mid, coarse=coarse,
                           height=pyr.height, width=pyr.width)


@dataclass
class _AlignedPyramid:
    """Pyramid after channel alignment: all levels at width 2C."""

    fine: np.ndarray
    mid: np.ndarray
    coarse: np.ndarray
    height: int
    width: int


def _tokens_to_grid(tokens: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return tokens.reshape(rows, cols, -1).transpose(2, 0, 1)


def _grid_to_tokens(grid: np.ndarray) -> np.ndarray:
    return grid.transpose(1, 2, 0).reshape(grid.shape[1] * grid.shape[2], -1)


def linear_alignment(pyr: _AlignedPyramid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinearly resample the channel-aligned fine/coarse levels onto the
    stride-16 grid; the mid level passes through unchanged."""
    gh, gw = pyr.height // 16, pyr.width // 16
    fine_grid = _tokens_to_grid(pyr.fine, pyr.height // 8, pyr.width // 8)
    coarse_grid = _tokens_to_grid(pyr.coarse, pyr.height // 32, pyr.width // 32)
    fine_rs = _grid_to_tokens(T.bilinear_resize(fine_grid, gh, gw))
    coarse_rs = _grid_to_tokens(T.bilinear_resize(coarse_grid, gh, gw))
    return fine_rs, pyr.mid.copy(), coarse_rs


def csfa_forward(pyr: FeaturePyramid, w: CsfaWeights) -> AlignedFeatureSet:
    """Full alignment pass producing the canonical six-feature list."""
    aligned = channel_align(pyr, w)
    fine_fused = cross_attention_block(aligned.mid, aligned.fine, w.blocks["cross_fine"])
    coarse_fused = cross_attention_block(aligned.mid, aligned.coarse, w.blocks["cross_coarse"])
    self_updated = self_attention_block(aligned.mid, w.blocks["self_mid"])

    fine_fused = self_attention_block(fine_fused, w.blocks["refine_fine"])
    coarse_fused = self_attention_block(coarse_fused, w.blocks["refine_coarse"])
    self_updated = self_attention_block(self_updated, w.blocks["refine_self"])

    fine_rs, mid_id, coarse_rs = linear_alignment(aligned)
    gh, gw = pyr.grid
    return AlignedFeatureSet(
        features=[fine_fused, coarse_fused, self_updated, fine_rs, mid_id, coarse_rs],
        grid_h=gh,
        grid_w=gw,
    )
