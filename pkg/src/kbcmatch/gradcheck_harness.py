"""Canonical finite-difference check instance for the decoder gradients.

The instance is deliberately generic: the readout temperature is kept
unsaturated (a near-one-hot softmax starves most cells of gradient, so the
finite differences drown in rounding noise rather than measuring anything) and
the norm offsets are randomised (identical offsets make constant shifts cancel
through the next group norm, again leaving near-zero gradients). The identity
being checked is the same at any temperature.
"""

from __future__ import annotations

import numpy as np

from .decoder import DecoderWeights, FlowMap
from .training import gradcheck

GRID = 4
STEP = 1e-4
CHECK_TEMPERATURE = 0.25


def make_instance(seed: int = 0):
    """Seeded (correlation, weights, target flow) triple on a 1x6x4x4x4x4 volume."""
    rng = np.random.default_rng(seed)
    corr = rng.uniform(-1.0, 1.0, size=(1, 6, GRID, GRID, GRID, GRID))
    weights = DecoderWeights.seeded(seed + 1, scale=1.0, dtype=np.float64)
    for g in weights.groups:
        g.beta[:] = rng.normal(0.0, 0.4, size=g.beta.shape)
        g.gamma[:] = 1.0 + rng.normal(0.0, 0.3, size=g.gamma.shape)
    values = rng.uniform(-1.5, 1.5, size=(2, GRID, GRID))
    mask = rng.random((GRID, GRID)) < 0.7
    mask[0, 0] = True  # keep at least one supervised cell
    return corr, weights, FlowMap(values=values, mask=mask)


def run_gradcheck(seed: int = 0, step: float = STEP,
                  temperature: float = CHECK_TEMPERATURE,
                  max_per_group: int | None = None) -> dict:
    corr, weights, gt = make_instance(seed)
    return gradcheck(corr, weights, gt, temperature=temperature, step=step,
                     max_per_group=max_per_group, seed=seed)
