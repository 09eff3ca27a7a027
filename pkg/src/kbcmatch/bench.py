"""Wall-clock comparison of dense vs center-pivot 4D convolution."""

from __future__ import annotations

import time
from statistics import median

import numpy as np

from .conv4d import CenterPivotKernel, center_pivot_conv4d, dense_conv4d, embed_center_pivot

DEFAULT_SHAPE = (1, 6, 16, 16, 16, 16)
DEFAULT_KERNEL = 3
DEFAULT_REPEATS = 21


def bench_conv4d(shape=DEFAULT_SHAPE, kernel_size: int = DEFAULT_KERNEL,
                 repeats: int = DEFAULT_REPEATS, seed: int = 0) -> dict:
    """Median-of-``repeats`` forward times for both convolution paths on the
    same random volume and kernel; returns timings plus the speedup ratio."""
    rng = np.random.default_rng(seed)
    volume = rng.standard_normal(shape).astype(np.float32)
    cin = shape[1]
    cp = CenterPivotKernel.seeded(cin, cin, rng, k=kernel_size, dtype=np.float32)
    dense_kernel = embed_center_pivot(cp)

    def time_fn(fn):
        times = []
        fn()  # warm-up outside the timed runs
        for _ in range(repeats):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        return times

    dense_times = time_fn(lambda: dense_conv4d(volume, dense_kernel))
    cp_times = time_fn(lambda: center_pivot_conv4d(volume, cp))
    dense_med = median(dense_times)
    cp_med = median(cp_times)
    return {
        "shape": list(shape),
        "kernel": kernel_size,
        "repeats": repeats,
        "dense_median_s": dense_med,
        "center_pivot_median_s": cp_med,
        "speedup": dense_med / cp_med if cp_med > 0 else float("inf"),
    }
