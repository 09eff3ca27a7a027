"""Dense and center-pivot 4D convolution over correlation volumes.

A correlation volume is (B, C, h, w, h', w'): two spatial planes, source and
target. Dense 4D convolution slides a (k, k, k', k') window over both planes
jointly and is the brute-force reference. The center-pivot factorisation keeps
only the taps passing through either window center, which splits the 4D kernel
into two 2D kernels:

* a source-side kernel applied over (h, w) with (h', w') flattened into the
  batch axis, and
* a target-side kernel applied over (h', w') with (h, w) as batch.

Their sum (plus bias) equals dense convolution with the sparse embedded 4D
kernel built by ``embed_center_pivot``; the embedded kernel's central tap is
the sum of both 2D centers, because both terms see the center element once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_ops import conv2d_batched
from .errors import ShapeError


def _check_volume(m: np.ndarray) -> tuple[int, ...]:
    if m.ndim != 6:
        raise ShapeError(f"correlation volume must have 6 axes (B,C,h,w,h',w'), got {m.ndim}")
    return m.shape


def _check_kernel4d(k: np.ndarray) -> None:
    if k.ndim != 6:
        raise ShapeError(f"4D kernel must have 6 axes (Cout,Cin,k,k,k',k'), got {k.ndim}")
    _, _, ka, kb, kc, kd = k.shape
    if ka != kb or kc != kd:
        raise ShapeError(f"kernel windows must be square, got {ka}x{kb} and {kc}x{kd}")
    if ka % 2 == 0 or kc % 2 == 0:
        raise ShapeError(f"kernel sides must be odd, got {ka} and {kc}")


@dataclass
class CenterPivotKernel:
    """Factorised 4D kernel: source-side (Cout,Cin,k,k), target-side
    (Cout,Cin,k',k'), shared bias (Cout,)."""

    source_kernel: np.ndarray
    target_kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        ks, kt = self.source_kernel, self.target_kernel
        if ks.ndim != 4 or kt.ndim != 4:
            raise ShapeError("center-pivot kernels must have 4 axes (Cout,Cin,k,k)")
        if ks.shape[:2] != kt.shape[:2]:
            raise ShapeError(
                f"channel axes differ between halves: {ks.shape[:2]} vs {kt.shape[:2]}"
            )
        for side, k in (("source", ks), ("target", kt)):
            if k.shape[2] != k.shape[3] or k.shape[2] % 2 == 0:
                raise ShapeError(f"{side} kernel must be square with odd side, got {k.shape[2:]}")
        if self.bias.shape != (ks.shape[0],):
            raise ShapeError(f"bias axis: expected ({ks.shape[0]},), got {self.bias.shape}")

    @property
    def out_channels(self) -> int:
        return self.source_kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.source_kernel.shape[1]

    @classmethod
    def zeros(cls, cout: int, cin: int, k: int = 3, k2: int | None = None,
              dtype=np.float32) -> "CenterPivotKernel":
        k2 = k if k2 is None else k2
        return cls(
            source_kernel=np.zeros((cout, cin, k, k), dtype=dtype),
            target_kernel=np.zeros((cout, cin, k2, k2), dtype=dtype),
            bias=np.zeros(cout, dtype=dtype),
        )

    @classmethod
    def seeded(cls, cout: int, cin: int, rng: np.random.Generator, k: int = 3,
               k2: int | None = None, scale: float = 1.0, dtype=np.float32) -> "CenterPivotKernel":
        k2 = k if k2 is None else k2
        std_s = scale / np.sqrt(cin * k * k)
        std_t = scale / np.sqrt(cin * k2 * k2)
        return cls(
            source_kernel=(rng.standard_normal((cout, cin, k, k)) * std_s).astype(dtype),
            target_kernel=(rng.standard_normal((cout, cin, k2, k2)) * std_t).astype(dtype),
            bias=np.zeros(cout, dtype=dtype),
        )


def dense_conv4d(m: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full 4D cross-correlation with zero padding, spatial extents preserved.

    Vectorised as a loop over the k*k*k'*k' kernel taps, each tap a channel
    mix over the shifted volume; semantically identical to the eight-nested-loop
    definition (the tests carry an independent naive-loop implementation).
    """
    b, cin, h, w, h2, w2 = _check_volume(m)
    _check_kernel4d(kernel)
    cout, kcin, ka, _, kc, _ = kernel.shape
    if kcin != cin:
        raise ShapeError(f"kernel input-channel axis: expected {cin}, got {kcin}")
    pa, pc = ka // 2, kc // 2
    mp = np.pad(m, ((0, 0), (0, 0), (pa, pa), (pa, pa), (pc, pc), (pc, pc)))
    out = np.zeros((b, cout, h, w, h2, w2), dtype=m.dtype)
    for a in range(ka):
        for bb in range(ka):
            for c in range(kc):
                for d in range(kc):
                    tap = kernel[:, :, a, bb, c, d]
                    window = mp[:, :, a : a + h, bb : bb + w, c : c + h2, d : d + w2]
                    out += np.einsum("oc,bcijkl->boijkl", tap, window)
    return out


def center_pivot_conv4d(m: np.ndarray, kernel: CenterPivotKernel) -> np.ndarray:
    """Two-pass factorised 4D convolution: source-side 2D conv + target-side
    2D conv + bias."""
    b, cin, h, w, h2, w2 = _check_volume(m)
    if kernel.in_channels != cin:
        raise ShapeError(f"kernel input-channel axis: expected {cin}, got {kernel.in_channels}")
    cout = kernel.out_channels

    # source side: (h', w') joins the batch axis
    src_in = np.ascontiguousarray(m.transpose(0, 4, 5, 1, 2, 3)).reshape(b * h2 * w2, cin, h, w)
    src_out = conv2d_batched(src_in, kernel.source_kernel)
    src_out = src_out.reshape(b, h2, w2, cout, h, w).transpose(0, 3, 4, 5, 1, 2)

    # target side: (h, w) joins the batch axis
    trg_in = np.ascontiguousarray(m.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, cin, h2, w2)
    trg_out = conv2d_batched(trg_in, kernel.target_kernel)
    trg_out = trg_out.reshape(b, h, w, cout, h2, w2).transpose(0, 3, 1, 2, 4, 5)

    bias = kernel.bias.reshape(1, cout, 1, 1, 1, 1)
    return src_out + trg_out + bias


def center_pivot_conv4d_backward(m: np.ndarray, kernel: CenterPivotKernel,
                                 grad_out: np.ndarray):
    """Gradients of ``center_pivot_conv4d`` w.r.t. both kernels, bias and input."""
    from .tensor_ops import conv2d_backward

    b, cin, h, w, h2, w2 = m.shape
    cout = kernel.out_channels

    src_in = np.ascontiguousarray(m.transpose(0, 4, 5, 1, 2, 3)).reshape(b * h2 * w2, cin, h, w)
    g_src = np.ascontiguousarray(grad_out.transpose(0, 4, 5, 1, 2, 3)).reshape(b * h2 * w2, cout, h, w)
    d_ks, _, d_in_src = conv2d_backward(src_in, kernel.source_kernel, g_src)
    d_in_src = d_in_src.reshape(b, h2, w2, cin, h, w).transpose(0, 3, 4, 5, 1, 2)

    trg_in = np.ascontiguousarray(m.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, cin, h2, w2)
    g_trg = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, cout, h2, w2)
    d_kt, _, d_in_trg = conv2d_backward(trg_in, kernel.target_kernel, g_trg)
    d_in_trg = d_in_trg.reshape(b, h, w, cin, h2, w2).transpose(0, 3, 1, 2, 4, 5)

    d_bias = grad_out.sum(axis=(0, 2, 3, 4, 5))
    return d_ks, d_kt, d_bias, d_in_src + d_in_trg


def embed_center_pivot(kernel: CenterPivotKernel, dtype=None) -> np.ndarray:
    """Embed the two 2D kernels into a sparse dense-4D kernel.

    The source kernel lands on the target-center slice, the target kernel on
    the source-center slice; the shared central tap accumulates both, matching
    the two-term sum computed by ``center_pivot_conv4d``. Bias is not part of
    the 4D kernel and must be added separately when comparing.
    """
    ks, kt = kernel.source_kernel, kernel.target_kernel
    cout, cin, k, _ = ks.shape
    k2 = kt.shape[2]
    dtype = dtype or ks.dtype
    dense = np.zeros((cout, cin, k, k, k2, k2), dtype=dtype)
    dense[:, :, :, :, k2 // 2, k2 // 2] += ks
    dense[:, :, k // 2, k // 2, :, :] += kt
    return dense
