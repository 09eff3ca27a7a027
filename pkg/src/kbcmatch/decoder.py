"""Correlation decoder and flow readout.

Three groups of (center-pivot 4D convolution -> group norm -> ReLU) refine the
6-channel correlation volume through the 6->16->16->16 channel plan, then a
per-position linear head maps to a single channel. The refined volume is read
out as a flow map by a temperature-controlled soft-argmax over target cells:
each source cell's displacement is the probability-weighted mean target
coordinate minus its own coordinate, in grid units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .conv4d import CenterPivotKernel, center_pivot_conv4d
from .errors import ConfigError, ShapeError

CHANNEL_PLAN = (6, 16, 16, 16, 1)
NORM_GROUPS = 4
DEFAULT_TEMPERATURE = 0.05


@dataclass
class FlowMap:
    """Per-source-cell displacement field: values (2, h, w) holding (dx, dy) in
    grid units; mask marks supervised cells (all-true for predictions)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != 2:
            raise ShapeError(f"flow values must be (2,h,w), got {self.values.shape}")
        if self.mask.shape != self.values.shape[1:]:
            raise ShapeError(
                f"mask shape {self.mask.shape} != grid {self.values.shape[1:]}"
            )

    @property
    def grid(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass
class DecoderGroup:
    conv: CenterPivotKernel
    gamma: np.ndarray
    beta: np.ndarray


@dataclass
class DecoderWeights:
    """Three conv groups plus the final 1-channel linear head."""

    groups: list
    head_weight: np.ndarray  # (1, C_last)
    head_bias: np.ndarray    # (1,)

    def __post_init__(self):
        plan = CHANNEL_PLAN
        if len(self.groups) != len(plan) - 2:
            raise ConfigError(f"expected {len(plan) - 2} conv groups, got {len(self.groups)}")
        for i, g in enumerate(self.groups):
            if g.conv.in_channels != plan[i] or g.conv.out_channels != plan[i + 1]:
                raise ConfigError(
                    f"group {i} channels {g.conv.in_channels}->{g.conv.out_channels} "
                    f"break the plan {plan}"
                )
            if g.gamma.shape != (plan[i + 1],) or g.beta.shape != (plan[i + 1],):
                raise ShapeError(f"group {i} affine must have shape ({plan[i + 1]},)")
        if self.head_weight.shape != (plan[-1], plan[-2]):
            raise ShapeError(
                f"head weight: expected {(plan[-1], plan[-2])}, got {self.head_weight.shape}"
            )

    @classmethod
    def zeros(cls, dtype=np.float32) -> "DecoderWeights":
        plan = CHANNEL_PLAN
        groups = [
            DecoderGroup(
                conv=CenterPivotKernel.zeros(plan[i + 1], plan[i], dtype=dtype),
                gamma=np.zeros(plan[i + 1], dtype=dtype),
                beta=np.zeros(plan[i + 1], dtype=dtype),
            )
            for i in range(len(plan) - 2)
        ]
        return cls(groups=groups,
                   head_weight=np.zeros((plan[-1], plan[-2]), dtype=dtype),
                   head_bias=np.zeros(plan[-1], dtype=dtype))

    @classmethod
    def passthrough(cls, dtype=np.float32) -> "DecoderWeights":
        """Deterministic peak-preserving weights for untrained inference: the
        first group averages the correlation channels through the kernel
        centers, later groups route channels through unchanged, and the head
        averages. Group norm is order-preserving per channel, so correlation
        peaks survive the whole stack."""
        plan = CHANNEL_PLAN
        groups = []
        for i in range(len(plan) - 2):
            cin, cout = plan[i], plan[i + 1]
            mix = np.full((cout, cin), 1.0 / cin) if i == 0 else np.eye(cout)
            ks = np.zeros((cout, cin, 3, 3), dtype=dtype)
            kt = np.zeros((cout, cin, 3, 3), dtype=dtype)
            ks[:, :, 1, 1] = mix / 2.0
            kt[:, :, 1, 1] = mix / 2.0
            groups.append(DecoderGroup(
                conv=CenterPivotKernel(source_kernel=ks, target_kernel=kt,
                                       bias=np.zeros(cout, dtype=dtype)),
                gamma=np.ones(cout, dtype=dtype),
                beta=np.full(cout, 0.5, dtype=dtype),
            ))
        head_w = np.full((plan[-1], plan[-2]), 1.0 / plan[-2], dtype=dtype)
        return cls(groups=groups, head_weight=head_w,
                   head_bias=np.zeros(plan[-1], dtype=dtype))

    @classmethod
    def seeded(cls, seed: int, scale: float = 1.0, dtype=np.float32) -> "DecoderWeights":
        rng = np.random.default_rng(seed)
        plan = CHANNEL_PLAN
        groups = [
            DecoderGroup(
                conv=CenterPivotKernel.seeded(plan[i + 1], plan[i], rng, scale=scale, dtype=dtype),
                gamma=np.ones(plan[i + 1], dtype=dtype),
                beta=np.full(plan[i + 1], 0.3, dtype=dtype),
            )
            for i in range(len(plan) - 2)
        ]
        head_w = (rng.standard_normal((plan[-1], plan[-2])) * scale / np.sqrt(plan[-2])).astype(dtype)
        return cls(groups=groups, head_weight=head_w,
                   head_bias=np.zeros(plan[-1], dtype=dtype))

    def param_items(self):
        for i, g in enumerate(self.groups):
            yield f"group{i}.source_kernel", g.conv.source_kernel
            yield f"group{i}.target_kernel", g.conv.target_kernel
            yield f"group{i}.bias", g.conv.bias
            yield f"group{i}.gamma", g.gamma
            yield f"group{i}.beta", g.beta
        yield "head.weight", self.head_weight
        yield "head.bias", self.head_bias

    @classmethod
    def from_params(cls, params: dict) -> "DecoderWeights":
        n_groups = len(CHANNEL_PLAN) - 2
        groups = [
            DecoderGroup(
                conv=CenterPivotKernel(
                    source_kernel=params[f"group{i}.source_kernel"],
                    target_kernel=params[f"group{i}.target_kernel"],
                    bias=params[f"group{i}.bias"],
                ),
                gamma=params[f"group{i}.gamma"],
                beta=params[f"group{i}.beta"],
            )
            for i in range(n_groups)
        ]
        return cls(groups=groups, head_weight=params["head.weight"],
                   head_bias=params["head.bias"])

    def astype(self, dtype) -> "DecoderWeights":
        return DecoderWeights.from_params({k: v.astype(dtype) for k, v in self.param_items()})

    def map(self, fn) -> "DecoderWeights":
        return DecoderWeights.from_params({k: fn(v) for k, v in self.param_items()})

    def zip_map(self, fn, other: "DecoderWeights") -> "DecoderWeights":
        theirs = dict(other.param_items())
        return DecoderWeights.from_params({k: fn(v, theirs[k]) for k, v in self.param_items()})


def decoder_forward(corr: np.ndarray, w: DecoderWeights, trace: list | None = None) -> np.ndarray:
    """(B,6,h,w,h',w') -> (B,1,h,w,h',w'). Pass ``trace`` to record the
    intermediates needed by the backward pass."""
    if corr.ndim != 6 or corr.shape[1] != CHANNEL_PLAN[0]:
        raise ShapeError(
            f"decoder input channel axis: expected {CHANNEL_PLAN[0]}, got {corr.shape}"
        )
    x = corr
    for g in w.groups:
        pre = center_pivot_conv4d(x, g.conv)
        normed = T.group_norm_batched(pre, NORM_GROUPS, g.gamma, g.beta)
        post = T.relu(normed)
        if trace is not None:
            trace.append({"input": x, "pre_norm": pre, "pre_relu": normed})
        x = post
    out = np.einsum("oc,bcijkl->boijkl", w.head_weight, x)
    out = out + w.head_bias.reshape(1, -1, 1, 1, 1, 1)
    if trace is not None:
        trace.append({"head_input": x})
    return out


def soft_argmax_flow(refined: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> FlowMap:
    """Soft-argmax readout of a single-channel refined volume into a FlowMap."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if refined.ndim != 6 or refined.shape[0] != 1 or refined.shape[1] != 1:
        raise ShapeError(
            f"flow readout expects a (1,1,h,w,h',w') volume, got {refined.shape}"
        )
    _, _, h, w, h2, w2 = refined.shape
    scores = refined.reshape(h * w, h2 * w2)
    probs = T.row_softmax(scores, scale=1.0 / temperature)
    xs = np.tile(np.arange(w2, dtype=scores.dtype), h2)
    ys = np.repeat(np.arange(h2, dtype=scores.dtype), w2)
    ex = probs @ xs
    ey = probs @ ys
    src_x = np.tile(np.arange(w, dtype=scores.dtype), h)
    src_y = np.repeat(np.arange(h, dtype=scores.dtype), w)
    values = np.stack([(ex - src_x).reshape(h, w), (ey - src_y).reshape(h, w)])
    return FlowMap(values=values, mask=np.ones((h, w), dtype=bool))


# spec name for the readout
flow_from_correlation = soft_argmax_flow


def sample_flow_at(flow: FlowMap, gx: float, gy: float) -> tuple[float, float]:
    """Clamped bilinear sample of the flow field at grid coordinates (gx, gy)."""
    h, w = flow.grid
    gx = min(max(gx, 0.0), w - 1.0)
    gy = min(max(gy, 0.0), h - 1.0)
    x0, y0 = int(np.floor(gx)), int(np.floor(gy))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = gx - x0, gy - y0
    v = flow.values
    top = v[:, y0, x0] * (1 - fx) + v[:, y0, x1] * fx
    bot = v[:, y1, x0] * (1 - fx) + v[:, y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return float(out[0]), float(out[1])
