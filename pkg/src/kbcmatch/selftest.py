"""In-process assertion registry: every closed-form / structural example the
package guarantees, runnable as one batch (CLI ``selftest`` and the service
endpoint). Each check is tiny and independent; the runner reports one
pass/fail line per check."""

from __future__ import annotations

import numpy as np

from . import tensor_ops as T
from .annotations import keypoints_to_json
from .config import RunConfig
from .conv4d import CenterPivotKernel, center_pivot_conv4d, dense_conv4d
from .correlation import build_corr4d, cosine_correlation
from .csfa import (
    AlignedFeatureSet,
    AttentionBlockWeights,
    CsfaWeights,
    FeaturePyramid,
    attention_weights,
    cross_attention_block,
    csfa_forward,
    self_attention_block,
)
from .decoder import DecoderWeights, FlowMap, decoder_forward, soft_argmax_flow
from .errors import BadMagicError
from .features import toy_extract
from .gradcheck_harness import make_instance
from .kbc import (
    KeypointSet,
    center_crop,
    contains_small_object,
    get_bounding_box,
    kbc_preprocess,
    keypoints_from_flow,
    min_pairwise_distance,
    resize_for_kbc,
)
from .metrics import aepe_loss, build_gt_flow, pck
from .pipeline import run_inference
from .runner import evaluate_pairs, infer_pairs
from .synthetic import generate_benchmark, make_shift_pairs
from .tensorfile import tensor_bytes, tensor_from_bytes
from .training import decoder_backward, train_toy


def _close(a, b, tol=1e-6):
    assert np.allclose(a, b, atol=tol, rtol=tol), f"max diff {np.max(np.abs(np.asarray(a) - np.asarray(b)))}"


# ---------------------------------------------------------------- tensor ops

def check_conv2d_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 4, 5)).astype(np.float32)
    k = np.zeros((2, 2, 1, 1), dtype=np.float32)
    k[0, 0, 0, 0] = k[1, 1, 0, 0] = 1.0
    _close(T.conv2d_same(x, k, np.zeros(2, dtype=np.float32)), x)


def check_conv2d_padding_arithmetic():
    x = np.ones((1, 3, 3), dtype=np.float32)
    k = np.ones((1, 1, 3, 3), dtype=np.float32)
    out = T.conv2d_same(x, k, np.zeros(1, dtype=np.float32))[0]
    assert out[1, 1] == 9.0, f"center {out[1, 1]}"
    for corner in ((0, 0), (0, 2), (2, 0), (2, 2)):
        assert out[corner] == 4.0, f"corner {corner} = {out[corner]}"


def check_resize_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 6, 7)).astype(np.float32)
    _close(T.bilinear_resize(x, 6, 7), x)


def check_resize_center_average():
    x = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    out = T.bilinear_resize(x, 3, 3)
    _close(out[0, 1, 1], 1.5)


def check_softmax_uniform():
    _close(T.row_softmax(np.full(4, 2.3)), np.full(4, 0.25))


def check_softmax_closed_form():
    out = T.row_softmax(np.array([0.0, np.log(2.0)]), scale=1.0)
    _close(out, [1.0 / 3.0, 2.0 / 3.0])


def check_softmax_no_overflow():
    out = T.row_softmax(np.array([1000.0, 1000.0]), scale=1.0)
    assert np.all(np.isfinite(out))
    _close(out, [0.5, 0.5])


def check_group_norm_constant_input():
    x = np.full((4, 3, 3), 7.0)
    out = T.group_norm(x, 2, np.ones(4), np.zeros(4))
    _close(out, np.zeros_like(x))


def check_group_norm_affine_dominates():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 3, 3))
    out = T.group_norm(x, 2, np.zeros(4), np.full(4, 5.0))
    _close(out, np.full_like(x, 5.0))


def check_linear_identity():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 4))
    _close(T.linear(x, np.eye(4), np.zeros(4)), x)


def check_linear_zero_weight():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 4))
    b = np.array([1.0, -2.0, 3.0])
    out = T.linear(x, np.zeros((3, 4)), b)
    _close(out, np.broadcast_to(b, (5, 3)))


# ---------------------------------------------------------------------- csfa

def _tiny_pyramid(seed=0, h=64, w=64, c=4, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return FeaturePyramid(
        fine=rng.standard_normal(((h // 8) * (w // 8), c)).astype(dtype),
        mid=rng.standard_normal(((h // 16) * (w // 16), 2 * c)).astype(dtype),
        coarse=rng.standard_normal(((h // 32) * (w // 32), 4 * c)).astype(dtype),
        height=h, width=w,
    )


def check_channel_align_identity_block():
    from .csfa import channel_align
    pyr = _tiny_pyramid(5)
    c = pyr.channels
    w = CsfaWeights.zeros(c)
    w.align_fine_w[:c, :] = np.eye(c, dtype=np.float32)  # C -> 2C embedding, zero pad
    aligned = channel_align(pyr, w)
    _close(aligned.fine[:, :c], pyr.fine)
    _close(aligned.fine[:, c:], 0.0)


def check_channel_align_zero():
    from .csfa import channel_align
    pyr = _tiny_pyramid(6)
    aligned = channel_align(pyr, CsfaWeights.zeros(pyr.channels))
    _close(aligned.fine, 0.0)
    _close(aligned.coarse, 0.0)


def check_cross_block_zero_weights_identity():
    rng = np.random.default_rng(7)
    q = rng.standard_normal((5, 8)).astype(np.float32)
    kv = rng.standard_normal((9, 8)).astype(np.float32)
    _close(cross_attention_block(q, kv, AttentionBlockWeights.zeros(8)), q)


def check_cross_block_single_key():
    rng = np.random.default_rng(8)
    q = rng.standard_normal((6, 8)).astype(np.float32)
    kv = rng.standard_normal((1, 8)).astype(np.float32)
    w = AttentionBlockWeights.seeded(8, rng)
    _close(attention_weights(q, kv, w), np.ones((6, 1)))


def check_self_block_zero_weights_identity():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((4, 8)).astype(np.float32)
    _close(self_attention_block(x, AttentionBlockWeights.zeros(8)), x)


def check_self_block_single_token():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((1, 8)).astype(np.float32)
    w = AttentionBlockWeights.seeded(8, rng)
    v = T.linear(T.linear(x, w.wv, w.bv), w.wo, w.bo)  # attention weight is exactly 1
    h = v + x
    expected = T.linear(T.gelu(T.linear(h, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2) + h
    _close(self_attention_block(x, w), expected, tol=1e-5)


def check_csfa_zero_weights_collapse():
    pyr = _tiny_pyramid(11)
    out = csfa_forward(pyr, CsfaWeights.zeros(pyr.channels))
    for i in range(3):
        _close(out.features[i], pyr.mid)


def check_csfa_output_structure():
    pyr = _tiny_pyramid(12)
    out = csfa_forward(pyr, CsfaWeights.seeded(pyr.channels, seed=3))
    assert len(out.features) == 6
    shapes = {f.shape for f in out.features}
    assert shapes == {out.features[0].shape}, f"shapes differ: {shapes}"


# --------------------------------------------------------------- correlation

def check_cosine_self_diagonal():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((6, 8)) + 0.1
    out = cosine_correlation(x, x)
    _close(np.diag(out), np.ones(6))


def check_cosine_orthogonal():
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    out = cosine_correlation(a, a)
    _close(out[0, 1], 0.0)
    _close(out[1, 0], 0.0)


def check_corr4d_identical_sets_diagonal():
    rng = np.random.default_rng(14)
    feats = [rng.standard_normal((6, 8)) + 0.05 for _ in range(6)]
    s = AlignedFeatureSet(features=feats, grid_h=2, grid_w=3)
    corr = build_corr4d(s, s)
    flat = corr[0].reshape(6, 6, 6)
    for ch in range(6):
        _close(np.diag(flat[ch]), np.ones(6))


def check_corr4d_shape():
    rng = np.random.default_rng(15)
    src = AlignedFeatureSet([rng.standard_normal((6, 8)) for _ in range(6)], 2, 3)
    trg = AlignedFeatureSet([rng.standard_normal((12, 8)) for _ in range(6)], 3, 4)
    assert build_corr4d(src, trg).shape == (1, 6, 2, 3, 3, 4)


def check_corr4d_transpose_symmetry():
    rng = np.random.default_rng(16)
    src = AlignedFeatureSet([rng.standard_normal((6, 8)) for _ in range(6)], 2, 3)
    trg = AlignedFeatureSet([rng.standard_normal((12, 8)) for _ in range(6)], 3, 4)
    ab = build_corr4d(src, trg)
    ba = build_corr4d(trg, src)
    assert np.array_equal(ab.transpose(0, 1, 4, 5, 2, 3), ba)


def check_cosine_scale_invariance():
    rng = np.random.default_rng(17)
    src = rng.standard_normal((5, 8))
    trg = rng.standard_normal((7, 8))
    base = cosine_correlation(src, trg)
    scaled = src.copy()
    scaled[2] *= 37.5
    out = cosine_correlation(scaled, trg)
    _close(out[2], base[2], tol=1e-5)


# -------------------------------------------------------------------- conv4d

def check_dense_delta_identity():
    rng = np.random.default_rng(18)
    m = rng.standard_normal((1, 2, 3, 3, 3, 3))
    k = np.zeros((2, 2, 3, 3, 3, 3))
    for c in range(2):
        k[c, c, 1, 1, 1, 1] = 1.0
    _close(dense_conv4d(m, k), m)


def check_dense_window_product():
    m = np.ones((1, 1, 5, 5, 5, 5))
    k = np.ones((1, 1, 3, 3, 3, 3))
    out = dense_conv4d(m, k)
    _close(out[0, 0, 2, 2, 2, 2], 81.0)


def check_cp_zero_kernels():
    rng = np.random.default_rng(19)
    m = rng.standard_normal((1, 2, 3, 3, 3, 3))
    out = center_pivot_conv4d(m, CenterPivotKernel.zeros(2, 2))
    _close(out, 0.0)


def check_cp_one_sided_identity():
    rng = np.random.default_rng(20)
    m = rng.standard_normal((1, 2, 3, 4, 3, 4))
    cp = CenterPivotKernel.zeros(2, 2)
    for c in range(2):
        cp.source_kernel[c, c, 1, 1] = 1.0
    _close(center_pivot_conv4d(m, cp), m)


def check_decoder_zero_weights():
    rng = np.random.default_rng(21)
    corr = rng.standard_normal((1, 6, 3, 3, 3, 3)).astype(np.float32)
    out = decoder_forward(corr, DecoderWeights.zeros())
    _close(out, 0.0)


def check_decoder_output_shape():
    rng = np.random.default_rng(22)
    corr = rng.standard_normal((1, 6, 3, 4, 2, 5)).astype(np.float32)
    out = decoder_forward(corr, DecoderWeights.seeded(0))
    assert out.shape == (1, 1, 3, 4, 2, 5)


def check_flow_one_hot():
    rng = np.random.default_rng(23)
    h = w = h2 = w2 = 4
    refined = np.zeros((1, 1, h, w, h2, w2))
    targets = rng.integers(0, 4, size=(h, w, 2))
    for i in range(h):
        for j in range(w):
            refined[0, 0, i, j, targets[i, j, 0], targets[i, j, 1]] = 1.0
    flow = soft_argmax_flow(refined, temperature=0.01)
    for i in range(h):
        for j in range(w):
            ti, tj = targets[i, j]
            assert abs(flow.values[0, i, j] - (tj - j)) < 1e-3
            assert abs(flow.values[1, i, j] - (ti - i)) < 1e-3


def check_flow_uniform_centroid():
    h, w, h2, w2 = 3, 4, 5, 6
    refined = np.full((1, 1, h, w, h2, w2), 0.37)
    flow = soft_argmax_flow(refined, temperature=0.05)
    cx, cy = (w2 - 1) / 2.0, (h2 - 1) / 2.0
    for i in range(h):
        for j in range(w):
            _close(flow.values[0, i, j], cx - j)
            _close(flow.values[1, i, j], cy - i)


def check_keypoints_zero_flow():
    flow = FlowMap(values=np.zeros((2, 4, 4)), mask=np.ones((4, 4), dtype=bool))
    pts = KeypointSet(points=[[10.0, 20.0], [33.0, 47.0]])
    out = keypoints_from_flow(flow, pts, stride=16.0)
    _close(out.points, pts.points)


def check_keypoints_constant_flow():
    values = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 2.0)])
    flow = FlowMap(values=values, mask=np.ones((4, 4), dtype=bool))
    pts = KeypointSet(points=[[10.0, 20.0], [40.0, 50.0]])
    out = keypoints_from_flow(flow, pts, stride=16.0)
    _close(out.points, pts.points + np.array([16.0, 32.0]))


# ----------------------------------------------------------------------- kbc

def check_bbox_two_points():
    box = get_bounding_box(KeypointSet(points=[[10.0, 20.0], [30.0, 40.0]]))
    assert (box.xmin, box.ymin, box.xmax, box.ymax) == (10.0, 20.0, 30.0, 40.0)
    assert box.width == 20.0 and box.height == 20.0


def check_bbox_single_point():
    box = get_bounding_box(KeypointSet(points=[[5.0, 5.0]]))
    assert (box.xmin, box.ymin, box.xmax, box.ymax) == (5.0, 5.0, 5.0, 5.0)


def check_min_distance_345():
    d = min_pairwise_distance(KeypointSet(points=[[0.0, 0.0], [3.0, 4.0]]))
    _close(d, 5.0)


def check_min_distance_duplicates():
    d = min_pairwise_distance(KeypointSet(points=[[2.0, 2.0], [2.0, 2.0]]))
    _close(d, 0.0)


def check_small_object_true():
    pts = KeypointSet(points=[[50.0, 60.0], [150.0, 140.0]])  # bbox 100x80
    assert contains_small_object(pts, 256, 256, 0.8) is True


def check_small_object_false():
    pts = KeypointSet(points=[[3.0, 3.0], [253.0, 253.0]])  # bbox 250x250
    assert contains_small_object(pts, 256, 256, 0.8) is False


def check_small_object_boundary_strict():
    pts = KeypointSet(points=[[0.0, 0.0], [128.0, 100.0]])  # r = 0.5 exactly
    assert contains_small_object(pts, 256, 256, 0.5) is False


def check_center_crop_offsets():
    img = np.zeros((3, 512, 512), dtype=np.float32)
    pts = KeypointSet(points=[[256.0, 256.0]])
    crop, shifted, t = center_crop(img, pts, (256.0, 256.0), 256, 256)
    assert crop.shape == (3, 256, 256)
    assert (t.ox, t.oy) == (128.0, 128.0)
    _close(shifted.points[0], [128.0, 128.0])


def check_center_crop_corner_clamp():
    img = np.zeros((3, 512, 512), dtype=np.float32)
    pts = KeypointSet(points=[[10.0, 10.0]])
    _, _, t = center_crop(img, pts, (10.0, 10.0), 256, 256)
    assert (t.ox, t.oy) == (0.0, 0.0)


def check_resize_scale_two():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[100.0, 100.0], [108.0, 100.0], [112.0, 118.0]])
    _, scaled, s = resize_for_kbc(img, pts, min_dis=8.0, out_w=256, out_h=256)
    _close(s, 2.0, tol=1e-12)
    _close(scaled.points, pts.points * 2.0)


def check_resize_scale_cap():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[10.0, 10.0], [210.0, 210.0]])  # bbox 200x200
    _, _, s = resize_for_kbc(img, pts, min_dis=4.0, out_w=256, out_h=256)
    _close(s, 0.9 * 256 / 200, tol=1e-12)


def check_preprocess_direct_branch():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[100.0, 100.0], [120.0, 100.0]])  # min_dis 20 > 16
    _, _, t = kbc_preprocess(img, pts, 256, 256)
    assert t.scale == 1.0 and t.applied


def check_preprocess_resize_branch():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[100.0, 100.0], [108.0, 100.0]])  # min_dis 8
    _, _, t = kbc_preprocess(img, pts, 256, 256)
    _close(t.scale, 2.0, tol=1e-12)


def check_inference_gates_off():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[100.0, 100.0], [105.0, 103.0]])
    stub = lambda s, t, p: p.replace_points(p.points + 7.0)
    res = run_inference(img, img, pts, provider=None, weights=None, threshold=0.0,
                        kbc_mode="src+trg", single_pass=stub)
    assert res.passes == 1
    assert not res.source_transform.applied and not res.target_transform.applied
    _close(res.predictions.points, pts.points + 7.0)


def check_inference_source_gate_composition():
    img = np.zeros((3, 256, 256), dtype=np.float32)
    pts = KeypointSet(points=[[100.0, 100.0], [104.0, 103.0], [98.0, 96.0]])
    stub = lambda s, t, p: p  # identity flow: predictions equal (cropped) sources
    res = run_inference(img, img, pts, provider=None, weights=None, threshold=0.8,
                        kbc_mode="src", single_pass=stub)
    assert res.source_transform.applied
    _close(res.source_transform.invert(res.predictions.points), pts.points, tol=1e-9)


# ------------------------------------------------------------------- metrics

def check_gt_flow_single_pair():
    src = KeypointSet(points=[[32.0, 16.0]])
    trg = KeypointSet(points=[[48.0, 48.0]])
    flow = build_gt_flow(src, trg, 4, 4, stride=16.0)
    assert flow.mask[1, 2] and flow.mask.sum() == 1
    _close(flow.values[:, 1, 2], [1.0, 2.0])


def check_gt_flow_zero_displacement():
    pts = KeypointSet(points=[[32.0, 16.0], [50.0, 60.0]])
    flow = build_gt_flow(pts, pts, 4, 4, stride=16.0)
    _close(flow.values[:, flow.mask], 0.0)


def check_aepe_exact_match():
    values = np.random.default_rng(24).standard_normal((2, 4, 4))
    mask = np.ones((4, 4), dtype=bool)
    _close(aepe_loss(FlowMap(values, mask), FlowMap(values.copy(), mask)), 0.0)


def check_aepe_345():
    gt = FlowMap(np.zeros((2, 3, 3)), np.ones((3, 3), dtype=bool))
    pred_vals = np.stack([np.full((3, 3), 3.0), np.full((3, 3), 4.0)])
    pred = FlowMap(pred_vals, np.ones((3, 3), dtype=bool))
    _close(aepe_loss(pred, gt), 5.0)


def check_pck_exact():
    pts = KeypointSet(points=[[10.0, 10.0], [60.0, 70.0]])
    record = pck(pts, pts, alpha=0.1, ref_h=100, ref_w=100)
    assert record.pck == 1.0


def check_pck_half():
    gt = KeypointSet(points=[[0.0, 0.0], [50.0, 50.0]])
    pred = KeypointSet(points=[[3.0, 4.0], [62.0, 66.0]])  # distances 5 and 20
    record = pck(pred, gt, alpha=0.1, ref_h=100, ref_w=100)
    _close(record.distances, [5.0, 20.0])
    assert record.pck == 0.5


def check_backward_stationary_point():
    corr, weights, _ = make_instance(31)
    refined = decoder_forward(corr, weights)
    flow = soft_argmax_flow(refined, temperature=0.05)
    _, grads = decoder_backward(corr, weights, flow, temperature=0.05)
    for name, g in grads.param_items():
        assert np.max(np.abs(g)) <= 1e-8, f"{name} grad {np.max(np.abs(g))}"


def check_backward_loss_scaling():
    corr, weights, gt = make_instance(32)
    loss1, g1 = decoder_backward(corr, weights, gt)
    loss3, g3 = decoder_backward(corr, weights, gt, loss_scale=3.0)
    _close(loss3, 3.0 * loss1, tol=1e-12)
    for (n1, a), (n3, b) in zip(g1.param_items(), g3.param_items()):
        _close(b, 3.0 * a, tol=1e-9)


def _tiny_training_setup():
    csfa_w = CsfaWeights.seeded(8, seed=5, scale=0.5)
    pairs = make_shift_pairs(2, seed=6, csfa_weights=csfa_w, image_size=64, channels=8)
    return pairs, DecoderWeights.seeded(7, scale=0.5)


def check_train_zero_lr():
    pairs, w0 = _tiny_training_setup()
    w, trace = train_toy(pairs, w0, steps=3, lr=0.0)
    for (_, a), (_, b) in zip(w.param_items(), w0.param_items()):
        assert np.array_equal(a, np.asarray(b, dtype=np.float64))
    assert len(set(round(v, 12) for v in trace)) == 1, f"trace not flat: {trace}"


def check_train_doubling_steps():
    pairs, w0 = _tiny_training_setup()
    _, short = train_toy(pairs, w0, steps=6, lr=0.05)
    _, long = train_toy(pairs, w0, steps=12, lr=0.05)
    assert min(long) <= min(short) + 1e-12


# ------------------------------------------------------------------------ io

def check_tensorfile_roundtrip():
    rng = np.random.default_rng(25)
    x = rng.standard_normal((2, 3, 4)).astype(np.float32)
    blob = tensor_bytes(x)
    back = tensor_from_bytes(blob)
    assert np.array_equal(back, x) and back.dtype == x.dtype
    assert tensor_bytes(back) == blob


def check_tensorfile_bad_magic():
    blob = bytearray(tensor_bytes(np.zeros(3, dtype=np.float32)))
    blob[:4] = b"NOPE"
    try:
        tensor_from_bytes(bytes(blob))
    except BadMagicError:
        return
    raise AssertionError("bad magic accepted")


def check_toy_extract_deterministic():
    rng = np.random.default_rng(26)
    img = rng.random((3, 64, 64)).astype(np.float32)
    a = toy_extract(img, seed=4, channels=8)
    b = toy_extract(img, seed=4, channels=8)
    assert np.array_equal(a.fine, b.fine)
    assert np.array_equal(a.mid, b.mid)
    assert np.array_equal(a.coarse, b.coarse)


def check_toy_extract_shapes():
    rng = np.random.default_rng(27)
    img = rng.random((3, 256, 256)).astype(np.float32)
    pyr = toy_extract(img, seed=0, channels=16)
    assert pyr.fine.shape == (1024, 16)
    assert pyr.mid.shape == (256, 32)
    assert pyr.coarse.shape == (64, 64)


def _small_benchmark_run(kbc_mode: str):
    from .features import ToyFeatureProvider
    from .pipeline import ModelWeights

    cfg = RunConfig(seed=11, kbc_mode=kbc_mode)
    annotations, images = generate_benchmark(2, seed=11)
    weights = ModelWeights.seeded(cfg.seed, channels=cfg.feature_channels)
    weights.decoder = DecoderWeights.passthrough()
    provider = ToyFeatureProvider(cfg.seed, cfg.feature_channels)
    return infer_pairs(annotations, lambda i: images[i], weights, provider, cfg), annotations


def check_infer_deterministic():
    from .annotations import dump_records

    first, _ = _small_benchmark_run("off")
    second, _ = _small_benchmark_run("off")
    assert dump_records(first) == dump_records(second)


def check_evaluate_ground_truth_is_perfect():
    annotations, _ = generate_benchmark(2, seed=12)
    predictions = []
    for ann in annotations:
        points, valid = keypoints_to_json(ann.trg_keypoints)
        predictions.append({
            "pair_id": ann.pair_id,
            "points_raw": points,
            "valid": valid,
            "target_transform": {"scale": 1.0, "ox": 0.0, "oy": 0.0, "applied": False},
            "points": points,
        })
    report = evaluate_pairs(annotations, predictions, alphas=(0.05, 0.1, 0.15))
    footer = report[-1]
    for alpha, value in footer["mean_pck"].items():
        assert value == 1.0, f"alpha {alpha}: {value}"


def check_softmax_rows_normalised():
    rng = np.random.default_rng(28)
    x = rng.standard_normal((7, 9)) * 10
    p = T.row_softmax(x, scale=2.0)
    assert np.all(p > 0) and np.all(p < 1)
    _close(p.sum(axis=-1), np.ones(7))


CHECKS = [(name[len("check_"):].replace("_", "-"), fn)
          for name, fn in sorted(globals().items())
          if name.startswith("check_") and callable(fn)]


def run_selftest(names: list[str] | None = None) -> list[dict]:
    """Run all (or the named) checks; returns one record per check."""
    selected = CHECKS if not names else [(n, f) for n, f in CHECKS if n in names]
    results = []
    for name, fn in selected:
        try:
            fn()
            results.append({"name": name, "passed": True, "detail": ""})
        except Exception as exc:
            results.append({"name": name, "passed": False, "detail": f"{type(exc).__name__}: {exc}"})
    return results
