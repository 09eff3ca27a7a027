"""Reverse-mode gradients for the decoder and a toy gradient-descent trainer.

The differentiated objective is the full inference tail: decoder forward ->
soft-argmax flow readout -> average end-point error against a masked target
flow. Gradients are derived layer by layer (conv, group norm, ReLU, linear
head, softmax expectation, masked-norm mean) rather than through a generic
tape; the decoder is a fixed pipeline, so the hand-rolled chain is both the
simplest and the fastest option. All gradient work runs in float64.
"""

from __future__ import annotations

import numpy as np

from . import tensor_ops as T
from .conv4d import center_pivot_conv4d_backward
from .decoder import (
    DEFAULT_TEMPERATURE,
    NORM_GROUPS,
    DecoderWeights,
    FlowMap,
    decoder_forward,
    soft_argmax_flow,
)
from .errors import TrainingDivergedError
from .metrics import aepe_loss


def matching_loss(corr: np.ndarray, w: DecoderWeights, gt_flow: FlowMap,
                  temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Forward-only loss used by training and by the finite-difference checks."""
    refined = decoder_forward(corr, w)
    return aepe_loss(soft_argmax_flow(refined, temperature), gt_flow)


def _group_norm_backward(x: np.ndarray, gamma: np.ndarray, grad_y: np.ndarray,
                         groups: int, eps: float):
    b, c = x.shape[:2]
    spatial = x.shape[2:]
    g = x.reshape(b, groups, -1)
    gy = grad_y.reshape(b, c, -1)
    mean = g.mean(axis=2, keepdims=True)
    var = g.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((g - mean) * inv).reshape(b, c, -1)

    d_beta = gy.sum(axis=(0, 2))
    d_gamma = (gy * xhat).sum(axis=(0, 2))

    d_xhat = (gy * gamma[None, :, None]).reshape(b, groups, -1)
    xhat_g = xhat.reshape(b, groups, -1)
    m1 = d_xhat.mean(axis=2, keepdims=True)
    m2 = (d_xhat * xhat_g).mean(axis=2, keepdims=True)
    d_x = inv * (d_xhat - m1 - xhat_g * m2)
    return d_gamma, d_beta, d_x.reshape(b, c, *spatial)


def _flow_and_loss_backward(refined: np.ndarray, gt_flow: FlowMap, temperature: float):
    """Loss value plus its gradient w.r.t. the refined 1-channel volume."""
    _, _, h, w, h2, w2 = refined.shape
    scores = refined.reshape(h * w, h2 * w2)
    beta = 1.0 / temperature
    probs = T.row_softmax(scores, scale=beta)
    xs = np.tile(np.arange(w2, dtype=np.float64), h2)
    ys = np.repeat(np.arange(h2, dtype=np.float64), w2)
    ex = probs @ xs
    ey = probs @ ys
    src_x = np.tile(np.arange(w, dtype=np.float64), h)
    src_y = np.repeat(np.arange(h, dtype=np.float64), w)
    pred = np.stack([(ex - src_x).reshape(h, w), (ey - src_y).reshape(h, w)])

    cells = gt_flow.mask
    n_sup = int(cells.sum())
    diff = pred - gt_flow.values
    norms = np.sqrt((diff ** 2).sum(axis=0))
    loss = float(norms[cells].mean()) if n_sup else 0.0

    # dL/dpred: (diff / norm) / n_sup on supervised cells, 0 at exact matches
    grad_pred = np.zeros_like(pred)
    if n_sup:
        safe = np.where(norms > 0, norms, 1.0)
        grad_pred = np.where((cells & (norms > 0))[None], diff / safe[None] / n_sup, 0.0)

    gdx = grad_pred[0].reshape(h * w)
    gdy = grad_pred[1].reshape(h * w)
    # d(expected coordinate)/d(score) through the softmax
    t = gdx[:, None] * (xs[None, :] - ex[:, None]) + gdy[:, None] * (ys[None, :] - ey[:, None])
    d_scores = beta * probs * t
    return loss, d_scores.reshape(1, 1, h, w, h2, w2)


def decoder_backward(corr: np.ndarray, w: DecoderWeights, gt_flow: FlowMap,
                     temperature: float = DEFAULT_TEMPERATURE,
                     loss_scale: float = 1.0):
    """Returns (loss, gradients) where gradients mirrors the DecoderWeights tree."""
    corr = np.asarray(corr, dtype=np.float64)
    w64 = w.astype(np.float64)
    trace: list = []
    refined = decoder_forward(corr, w64, trace=trace)
    loss, grad = _flow_and_loss_backward(refined, gt_flow, temperature)
    if loss_scale != 1.0:
        grad = grad * loss_scale

    head_input = trace[-1]["head_input"]
    d_head_w = np.einsum("boijkl,bcijkl->oc", grad, head_input)
    d_head_b = grad.sum(axis=(0, 2, 3, 4, 5))
    grad = np.einsum("oc,boijkl->bcijkl", w64.head_weight, grad)

    grad_groups = []
    for g, cached in zip(reversed(w64.groups), reversed(trace[:-1])):
        grad = grad * (cached["pre_relu"] > 0)
        d_gamma, d_beta, grad = _group_norm_backward(
            cached["pre_norm"], g.gamma, grad, NORM_GROUPS, T.NORM_EPS
        )
        d_ks, d_kt, d_bias, grad = center_pivot_conv4d_backward(cached["input"], g.conv, grad)
        grad_groups.append((d_ks, d_kt, d_bias, d_gamma, d_beta))
    grad_groups.reverse()

    params = {}
    for i, (d_ks, d_kt, d_bias, d_gamma, d_beta) in enumerate(grad_groups):
        params[f"group{i}.source_kernel"] = d_ks
        params[f"group{i}.target_kernel"] = d_kt
        params[f"group{i}.bias"] = d_bias
        params[f"group{i}.gamma"] = d_gamma
        params[f"group{i}.beta"] = d_beta
    params["head.weight"] = d_head_w
    params["head.bias"] = d_head_b
    grads = DecoderWeights.from_params(params)
    return loss * loss_scale, grads


def _loss_and_relu_signature(corr, w, gt_flow, temperature):
    """Loss plus the packed sign pattern of every ReLU pre-activation; a sign
    flip between the two central-difference evaluations means the window
    straddled a kink, where finite differences do not measure the derivative."""
    trace: list = []
    refined = decoder_forward(corr, w, trace=trace)
    loss = aepe_loss(soft_argmax_flow(refined, temperature), gt_flow)
    signature = b"".join(np.packbits(t["pre_relu"] > 0).tobytes() for t in trace[:-1])
    return loss, signature


def gradcheck(corr: np.ndarray, w: DecoderWeights, gt_flow: FlowMap,
              temperature: float = DEFAULT_TEMPERATURE, step: float = 1e-4,
              max_per_group: int | None = None, seed: int = 0) -> dict:
    """Compare analytic gradients against central finite differences.

    Per parameter group, reports the max per-parameter relative error
    (denominator max(|analytic|, |numeric|, 1e-6)) and the group-norm relative
    error, over every parameter whose difference window is kink-free;
    parameters whose ReLU activation pattern flips inside the window are
    excluded (central differences are undefined across the kink) and counted.
    """
    corr = np.asarray(corr, dtype=np.float64)
    w = w.astype(np.float64)
    _, grads = decoder_backward(corr, w, gt_flow, temperature)
    analytic = dict(grads.param_items())
    params = dict(w.param_items())
    rng = np.random.default_rng(seed)

    groups: dict[str, dict] = {}
    for name, values in params.items():
        flat = values.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_group is not None and flat.size > max_per_group:
            idx = np.sort(rng.choice(flat.size, size=max_per_group, replace=False))
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        skipped = 0
        diff_sq = 0.0
        norm_a = 0.0
        norm_n = 0.0
        probe = DecoderWeights.from_params(params)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up, sig_up = _loss_and_relu_signature(corr, probe, gt_flow, temperature)
            flat[i] = orig - step
            down, sig_down = _loss_and_relu_signature(corr, probe, gt_flow, temperature)
            flat[i] = orig
            if sig_up != sig_down:
                skipped += 1
                continue
            numeric = (up - down) / (2 * step)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
            diff_sq += (a_flat[i] - numeric) ** 2
            norm_a += a_flat[i] ** 2
            norm_n += numeric ** 2
        norm_rel = (np.sqrt(diff_sq) / max(np.sqrt(norm_a), np.sqrt(norm_n), 1e-6)
                    if idx.size > skipped else 0.0)
        groups[name] = {
            "max_rel": worst,
            "norm_rel": float(norm_rel),
            "checked": int(idx.size - skipped),
            "kink_skipped": int(skipped),
        }
    return {
        "groups": groups,
        "max": max(g["max_rel"] for g in groups.values()),
        "kink_skipped": sum(g["kink_skipped"] for g in groups.values()),
        "checked": sum(g["checked"] for g in groups.values()),
    }


def train_toy(pairs: list, w0: DecoderWeights, steps: int, lr: float,
              temperature: float = DEFAULT_TEMPERATURE):
    """Plain gradient descent on the decoder over (correlation, target-flow)
    pairs; upstream feature weights stay frozen. Returns (weights, loss trace)."""
    w = w0.astype(np.float64)
    trace: list[float] = []
    for step in range(steps):
        total = None
        loss_sum = 0.0
        for corr, gt in pairs:
            loss, grads = decoder_backward(corr, w, gt, temperature)
            loss_sum += loss
            total = grads if total is None else total.zip_map(np.add, grads)
        mean_loss = loss_sum / len(pairs)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(step, trace)
        trace.append(mean_loss)
        if lr != 0.0:
            w = w.zip_map(lambda p, g: p - lr * g / len(pairs), total)
    return w, trace
