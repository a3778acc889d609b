import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

import waterwave.autodiff as ad
from waterwave.flow import FlowField, zero_flow
from waterwave.vcwave import (align_stack, align_window, decompose_stack,
                              vcwave_decompose, inconsistency_mask,
                              spatial_aggregate, resample_mask_nearest,
                              loss_tc, loss_detail, loss_basic)
from waterwave.errors import DataError


def _pattern(h, w, shift=0.0):
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                         indexing="ij")
    v = 0.5 + 0.2 * np.sin(2 * np.pi * (xs - shift) / 11.0) + 0.1 * np.cos(
        2 * np.pi * ys / 7.0)
    return np.clip(v, 0, 1)[:, :, None]


def _zero_flows(n, h, w):
    return [zero_flow(h, w) for _ in range(n)]


def test_align_stack_identity_under_zero_flow():
    rng = np.random.default_rng(0)
    stack = rng.random((4, 8, 8, 3))
    aligned = align_stack(stack, _zero_flows(3, 8, 8))
    assert np.allclose(aligned.frames, stack)
    assert aligned.validity.all()


def test_align_stack_compensates_integer_motion():
    """Content sliding 1 px right per frame with matching pair flows aligns to
    the first frame exactly (bilinear hits lattice points)."""
    frames = np.stack([_pattern(12, 16, shift=t) for t in range(4)])
    vec = np.zeros((12, 16, 2), dtype=np.float32)
    vec[:, :, 0] = 1.0
    flows = [FlowField(vec.copy()) for _ in range(3)]
    aligned = align_stack(frames, flows)
    ref = frames[0]
    for t in range(1, 4):
        v = aligned.validity[t]
        assert v.sum() > 0.5 * v.size
        assert np.abs(aligned.frames[t] - ref)[v].max() < 1e-10


def test_decompose_shapes_and_truncation():
    rng = np.random.default_rng(1)
    video = rng.random((5, 8, 10, 3))
    bands = vcwave_decompose(video, (0, 5), _zero_flows(4, 8, 10))
    assert bands.truncated
    assert bands.h_t.shape == (2, 8, 10, 3)
    assert bands.l_t.shape == (2, 8, 10, 3)
    assert bands.l_xy.shape == (5, 4, 5, 3)
    assert set(bands.subbands) == {"LH", "HL", "HH"}
    assert bands.subbands["HH"].shape == (5, 4, 5, 3)
    assert bands.validity_t.shape == (2, 8, 10)


def test_decompose_window_bounds_checked():
    video = np.zeros((4, 8, 8, 1))
    with pytest.raises(DataError):
        vcwave_decompose(video, (0, 6), _zero_flows(3, 8, 8))


def test_temporal_band_measures_gain_flicker_exactly():
    """Static scene with per-frame gains: H_t[k] = (g_{2k+1} - g_{2k}) * scene."""
    scene = _pattern(8, 8)
    gains = np.array([1.0, 1.15, 0.9, 1.05])
    video = np.stack([g * scene for g in gains])
    bands = vcwave_decompose(video, (0, 4), _zero_flows(3, 8, 8))
    for k in range(2):
        want = (gains[2 * k + 1] - gains[2 * k]) * scene
        assert np.allclose(bands.h_t[k], want, atol=1e-12)
        mean = 0.5 * (gains[2 * k + 1] + gains[2 * k]) * scene
        assert np.allclose(bands.l_t[k], mean, atol=1e-12)


def test_exact_flow_alignment_cancels_motion_in_h_t():
    frames = np.stack([_pattern(12, 16, shift=t) for t in range(4)])
    vec = np.zeros((12, 16, 2), dtype=np.float32)
    vec[:, :, 0] = 1.0
    flows = [FlowField(vec.copy()) for _ in range(3)]
    bands = decompose_stack(frames, flows, (0, 4))
    v = bands.validity_t
    assert v.sum() > 0
    assert np.abs(np.asarray(bands.h_t)[v]).max() < 1e-10


def test_mask_flags_flicker_on_smooth_scene():
    """Gain flicker on a spatially flat scene trips the temporal gate while
    the spatial gate stays open."""
    scene = np.full((8, 8, 1), 0.5)
    gains = [1.0, 1.3, 1.0, 1.3]
    video = np.stack([g * scene for g in gains])
    bands = vcwave_decompose(np.clip(video, 0, 1), (0, 4), _zero_flows(3, 8, 8))
    mask = inconsistency_mask(bands, beta0=1e-3, beta1=1e-2)
    assert mask.values.shape == (2, 8, 8)
    assert np.all(mask.values == 1.0)


def test_mask_suppressed_by_spatial_detail():
    """A busy checkerboard raises the spatial aggregate above beta1, closing
    the smoothness gate even under strong flicker."""
    yy, xx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    checker = (0.5 + 0.4 * (-1.0) ** (yy + xx))[:, :, None]
    video = np.stack([checker, 0.6 * checker, checker, 0.6 * checker])
    bands = vcwave_decompose(np.clip(video, 0, 1), (0, 4), _zero_flows(3, 8, 8))
    mask = inconsistency_mask(bands, beta0=1e-3, beta1=1e-2)
    assert np.all(mask.values == 0.0)


def test_mask_is_sign_invariant():
    rng = np.random.default_rng(2)
    video = rng.random((4, 8, 8, 1)) * 0.2
    flows = _zero_flows(3, 8, 8)
    b_pos = vcwave_decompose(video, (0, 4), flows)
    b_neg = vcwave_decompose(1.0 - video, (0, 4), flows)
    # |H| bands of v and 1-v are identical, spatial bands likewise
    m_pos = inconsistency_mask(b_pos)
    m_neg = inconsistency_mask(b_neg)
    assert np.array_equal(m_pos.values, m_neg.values)


def test_mask_zeroed_where_alignment_invalid():
    frames = np.stack([np.full((8, 8, 1), 0.2), np.full((8, 8, 1), 0.8)])
    vec = np.zeros((8, 8, 2), dtype=np.float32)
    vec[:, :, 0] = 20.0   # warp far outside: nothing valid
    bands = decompose_stack(frames, [FlowField(vec)], (0, 2))
    assert not bands.validity_t.any()
    mask = inconsistency_mask(bands)
    assert np.all(mask.values == 0.0)


def test_mask_rejects_nonpositive_thresholds():
    video = np.full((2, 8, 8, 1), 0.5)
    bands = vcwave_decompose(video, (0, 2), _zero_flows(1, 8, 8))
    with pytest.raises(DataError):
        inconsistency_mask(bands, beta0=0.0)
    with pytest.raises(DataError):
        inconsistency_mask(bands, beta1=-0.5)


def test_spatial_aggregate_checkerboard_value():
    """A checkerboard of amplitude a has |HH| = 4a under the unnormalized
    lifting transform (the high band doubles per axis), and that constant
    survives the upsample/box/pair averaging."""
    yy, xx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    checker = (0.5 + 0.4 * (-1.0) ** (yy + xx))[:, :, None]
    video = np.stack([checker, checker])
    bands = vcwave_decompose(video, (0, 2), _zero_flows(1, 8, 8))
    agg = spatial_aggregate(bands)
    assert agg.shape == (1, 8, 8)
    assert agg == pytest.approx(1.6)
    flat = vcwave_decompose(np.full((2, 8, 8, 1), 0.3), (0, 2), _zero_flows(1, 8, 8))
    assert spatial_aggregate(flat) == pytest.approx(0.0)


def test_resample_mask_nearest_indices():
    vals = np.arange(8.0).reshape(2, 2, 2)
    up = resample_mask_nearest(vals, 4, 4, 2)
    assert up.shape == (4, 4, 2)
    assert np.array_equal(up[0], up[1]) and np.array_equal(up[2], up[3])
    assert np.array_equal(up[0, 0], vals[0, 0])
    same = resample_mask_nearest(vals, 2, 2, 2)
    assert np.array_equal(same, vals)


def test_loss_tc_constant_step_value():
    """Two flat frames 0 -> 0.4: every trajectory change is 0.4, the mask is
    all ones, so the masked mean is exactly 0.4."""
    video = np.stack([np.zeros((8, 8, 1)), np.full((8, 8, 1), 0.4)])
    bands = vcwave_decompose(video, (0, 2), _zero_flows(1, 8, 8))
    mask = inconsistency_mask(bands)
    assert np.all(mask.values == 1.0)
    assert float(loss_tc(mask, bands)) == pytest.approx(0.4, abs=1e-12)


def test_loss_tc_empty_mask_is_zero():
    rng = np.random.default_rng(3)
    video = rng.random((2, 8, 8, 1))
    bands = vcwave_decompose(video, (0, 2), _zero_flows(1, 8, 8))
    mask = inconsistency_mask(bands, beta0=10.0)   # nothing passes the gate
    assert float(loss_tc(mask, bands)) == 0.0


def test_loss_detail_zero_for_identical_inputs():
    rng = np.random.default_rng(4)
    video = rng.random((4, 8, 8, 3))
    flows = _zero_flows(3, 8, 8)
    b1 = vcwave_decompose(video, (0, 4), flows)
    b2 = vcwave_decompose(video.copy(), (0, 4), flows)
    assert float(loss_detail(b1, b2)) == 0.0


def test_loss_detail_matches_brute_force():
    rng = np.random.default_rng(5)
    f = rng.random((4, 8, 8, 3))
    v = rng.random((4, 8, 8, 3))
    flows = _zero_flows(3, 8, 8)
    bf = vcwave_decompose(f, (0, 4), flows)
    bv = vcwave_decompose(v, (0, 4), flows)
    total, count = 0.0, 0
    for key in ("LH", "HL", "HH"):
        total += np.abs(np.asarray(bf.subbands[key]) - np.asarray(bv.subbands[key])).sum()
        count += np.asarray(bv.subbands[key]).size
    assert float(loss_detail(bf, bv)) == pytest.approx(total / count, rel=1e-12)


def test_loss_basic_complement_reduces_to_plain_means():
    """With an all-zero mask, complement weighting is uniform: the loss is the
    sum of the per-band mean L1 gaps."""
    rng = np.random.default_rng(6)
    f = rng.random((4, 8, 8, 3))
    v = rng.random((4, 8, 8, 3))
    flows = _zero_flows(3, 8, 8)
    bf = vcwave_decompose(f, (0, 4), flows)
    bv = vcwave_decompose(v, (0, 4), flows)
    mask = inconsistency_mask(bv, beta0=10.0)
    assert not mask.values.any()
    got = float(loss_basic(bf, bv, mask, mode="complement"))
    want = (np.abs(np.asarray(bf.l_t) - np.asarray(bv.l_t)).mean()
            + np.abs(np.asarray(bf.l_xy) - np.asarray(bv.l_xy)).mean())
    assert got == pytest.approx(want, rel=1e-12)


def test_loss_basic_mask_mode_complements_complement():
    rng = np.random.default_rng(7)
    f = rng.random((4, 8, 8, 3)) * 0.3
    v = rng.random((4, 8, 8, 3)) * 0.3
    flows = _zero_flows(3, 8, 8)
    bf = vcwave_decompose(f, (0, 4), flows)
    bv = vcwave_decompose(v, (0, 4), flows)
    mask = inconsistency_mask(bv, beta0=1e-4, beta1=1.0)  # everything flagged
    assert mask.values.all()
    comp = float(loss_basic(bf, bv, mask, mode="complement"))
    hit = float(loss_basic(bf, bv, mask, mode="mask"))
    assert comp == pytest.approx(0.0, abs=1e-15)
    assert hit > 0
    with pytest.raises(DataError):
        loss_basic(bf, bv, mask, mode="nope")


def test_losses_accept_tensor_bands_and_give_gradients():
    rng = np.random.default_rng(8)
    f_val = rng.random((2, 8, 8, 1)).astype(np.float32)
    v_val = rng.random((2, 8, 8, 1)).astype(np.float32)
    f = ad.Tensor(f_val, requires_grad=True)
    flows = _zero_flows(1, 8, 8)
    bf = decompose_stack(f, flows, (0, 2))
    bv = decompose_stack(v_val, flows, (0, 2))
    mask = inconsistency_mask(bv)
    total = loss_tc(inconsistency_mask(bf), bf) + loss_detail(bf, bv) \
        + loss_basic(bf, bv, mask)
    ad.backward(total)
    assert f.grad is not None and np.any(f.grad != 0)
    assert f.grad.dtype == np.float32


@given(st.integers(0, 40))
@settings(max_examples=15, deadline=None)
def test_loss_tc_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    video = rng.random((4, 8, 8, 3))
    flows = _zero_flows(3, 8, 8)
    bands = vcwave_decompose(video, (0, 4), flows)
    mask = inconsistency_mask(bands, beta0=5e-2, beta1=5e-2)
    h_t = np.asarray(bands.h_t)
    tp, he, we = mask.values.shape
    weights = mask.values * bands.validity_t[:, :he, :we]
    n = max(int(bands.validity_t[:, :he, :we].sum()) * h_t.shape[-1], 1)
    want = np.abs(h_t[:, :he, :we] * weights[..., None]).sum() / n
    assert float(loss_tc(mask, bands)) == pytest.approx(want, rel=1e-12)
