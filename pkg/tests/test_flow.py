import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

import waterwave.autodiff as ad
from waterwave.flow import (FlowField, zero_flow, warp, compose_flows,
                            estimate_flow_hs, estimate_transmission,
                            transmission_guidance, tfr_coords, rectify_flow,
                            read_flo, write_flo)
from waterwave.encoding import HashGridConfig, init_tables, encode_prepare
from waterwave.nn import MlpSpec, ParamStore, init_mlp
from waterwave.errors import DataError


def _scene(xs, ys):
    """Smooth multi-frequency pattern with gradients everywhere."""
    return (0.5 + 0.25 * np.sin(2 * np.pi * xs / 23.0) * np.cos(2 * np.pi * ys / 17.0)
            + 0.15 * np.sin(2 * np.pi * (xs + ys) / 31.0))


def _frame(h, w, dx=0.0, dy=0.0):
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                         indexing="ij")
    return np.clip(_scene(xs + dx, ys + dy), 0.0, 1.0)[:, :, None]


def test_flow_field_validation():
    with pytest.raises(DataError):
        FlowField(np.zeros((4, 4, 3)))
    f = zero_flow(4, 5)
    assert f.vectors.shape == (4, 5, 2) and f.vectors.dtype == np.float32


def test_warp_zero_flow_is_identity():
    img = np.random.default_rng(0).random((5, 6, 3))
    out, valid = warp(img, zero_flow(5, 6))
    assert np.allclose(out, img) and valid.all()


def test_warp_integer_shift():
    img = np.arange(20.0).reshape(4, 5, 1)
    vec = np.zeros((4, 5, 2), dtype=np.float32)
    vec[:, :, 1] = 1.0   # sample from one row below
    out, valid = warp(img, FlowField(vec))
    assert np.allclose(out[:3], img[1:])
    assert valid[:3].all() and not valid[3].any()


def test_warp_half_pixel_midpoint():
    img = np.array([[[0.0], [1.0]]])   # 1 x 2
    vec = np.zeros((1, 2, 2), dtype=np.float32)
    vec[0, 0, 0] = 0.5
    out, _ = warp(img, FlowField(vec))
    assert out[0, 0, 0] == pytest.approx(0.5)


def test_compose_flows_adds_translations():
    a = FlowField(np.full((8, 8, 2), 0.0, dtype=np.float32) + [1.0, 0.0])
    b = FlowField(np.full((8, 8, 2), 0.0, dtype=np.float32) + [2.0, 0.0])
    c = compose_flows(a, b)
    assert isinstance(c, FlowField)
    inner = c.vectors[:, :5]
    assert np.allclose(inner, [3.0, 0.0], atol=1e-6)


def test_compose_flows_matches_sequential_warp():
    rng = np.random.default_rng(1)
    img = _frame(16, 16)
    fa = FlowField(rng.uniform(-1, 1, (16, 16, 2)).astype(np.float32))
    fb = FlowField(rng.uniform(-1, 1, (16, 16, 2)).astype(np.float32))
    step1, v1 = warp(img, fa)
    step2, v2 = warp(step1, fb)
    direct, vd = warp(img, compose_flows(fa, fb))
    ok = v2 & vd & compose_flows(fa, fb).validity
    # interior pixels only; bilinear-of-bilinear vs direct differ slightly
    assert np.abs((step2 - direct)[2:-2, 2:-2][ok[2:-2, 2:-2]]).max() < 0.05


def test_hs_identical_frames_give_zero_flow():
    img = _frame(24, 24)
    f = estimate_flow_hs(img, img)
    assert np.abs(f.vectors).max() < 1e-6


def test_hs_recovers_uniform_translation():
    i1 = _frame(48, 48)
    i2 = _frame(48, 48, dx=1.0, dy=0.5)
    f = estimate_flow_hs(i1, i2)
    inner = f.vectors[8:-8, 8:-8]
    assert float(np.mean(inner[:, :, 0])) == pytest.approx(1.0, abs=0.15)
    assert float(np.mean(inner[:, :, 1])) == pytest.approx(0.5, abs=0.15)


def test_hs_textureless_frames_stay_still():
    img = np.full((16, 16, 1), 0.4)
    f = estimate_flow_hs(img, img + 0.0)
    assert np.abs(f.vectors).max() < 1e-8


def test_hs_warp_consistency():
    """warp(i1, flow) should come close to i2 where the flow is valid."""
    i1 = _frame(40, 40)
    i2 = _frame(40, 40, dx=0.7, dy=-0.3)
    f = estimate_flow_hs(i1, i2)
    warped, valid = warp(i1, f)
    err = np.abs(warped - i2)[valid]
    base = np.abs(i1 - i2)[valid]
    assert err.mean() < 0.35 * base.mean()


def test_transmission_uniform_half_hits_floor():
    frame = np.full((16, 16, 3), 0.5)
    tm = estimate_transmission(frame)
    assert np.allclose(tm.values, 0.1)


def test_transmission_clamps_to_unit_range():
    rng = np.random.default_rng(2)
    tm = estimate_transmission(rng.random((20, 20, 3)))
    assert tm.values.min() >= 0.1 and tm.values.max() <= 1.0


def test_transmission_omega_zero_is_fully_clear():
    frame = np.random.default_rng(3).random((12, 12, 3))
    tm = estimate_transmission(frame, omega=0.0)
    assert np.all(tm.values == 1.0)


def test_transmission_dark_region_is_clearer():
    """Dark patches have small dark-channel values -> higher transmission."""
    frame = np.full((24, 24, 3), 0.8)
    frame[4:12, 4:12] = 0.05
    tm = estimate_transmission(frame)
    assert tm.values[8, 8] > tm.values[20, 20]


def test_transmission_needs_3d_frame():
    with pytest.raises(DataError):
        estimate_transmission(np.zeros((8, 8)))


def test_guidance_channels():
    rng = np.random.default_rng(4)
    t_cur = rng.random((10, 10))
    t_next = rng.random((10, 10))
    g = transmission_guidance(t_cur, t_next, zero_flow(10, 10))
    assert g.shape == (10, 10, 4)
    assert np.allclose(g[:, :, 0], t_cur)
    assert np.allclose(g[:, :, 1], t_next)   # zero flow: plain copy
    assert np.allclose(g[4, 4, 2], t_cur[3:6, 3:6].mean())


def test_tfr_coords_normalization():
    vec = np.zeros((4, 6, 2), dtype=np.float32)
    vec[0, 0] = [1.0, 2.0]
    coords = tfr_coords(FlowField(vec), t_index=1, full_shape=(5, 4, 6))
    assert coords.shape == (24, 3)
    assert coords[0].tolist() == [1.0 / 5, 2.0 / 3, 2.0 / 4]
    assert np.all(coords[:, 2] == 0.5)


def test_rectify_flow_zero_init_is_identity():
    rng = np.random.default_rng(5)
    cfg = HashGridConfig(n_levels=2, base_resolution=4, table_size=2 ** 10)
    tables = [ad.Tensor(t, requires_grad=True) for t in init_tables(cfg, rng)]
    base = FlowField(rng.uniform(-1, 1, (6, 6, 2)).astype(np.float32))
    coords = tfr_coords(base, 0, (4, 6, 6))
    prepared = encode_prepare(cfg, coords)
    sigma = rng.random((6, 6, 4)).astype(np.float32)
    store = ParamStore()
    spec = MlpSpec(in_dim=cfg.out_dim + 4, hidden=(8,), out_dim=2, final="linear")
    init_mlp(store, "tfr", spec, rng, zero_last=True)
    out = rectify_flow(base, prepared, sigma, tables, store, spec, alpha=2.0)
    assert np.allclose(out.value, base.vectors, atol=1e-7)


def test_flo_roundtrip_and_magic(tmp_path):
    rng = np.random.default_rng(6)
    vec = rng.standard_normal((7, 5, 2)).astype(np.float32)
    p = tmp_path / "f.flo"
    write_flo(FlowField(vec), p)
    raw = p.read_bytes()
    assert np.frombuffer(raw[:4], dtype="<f4")[0] == np.float32(202021.25)
    assert np.frombuffer(raw[4:12], dtype="<i4").tolist() == [5, 7]
    back = read_flo(p)
    assert np.array_equal(back.vectors, vec)


def test_flo_rejects_corrupt_files(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(b"PIEH")        # header only, no dims
    with pytest.raises(DataError):
        read_flo(p)
    p.write_bytes(np.float32(123.0).tobytes() + np.array([2, 2], "<i4").tobytes())
    with pytest.raises(DataError):
        read_flo(p)


@given(st.integers(2, 10), st.integers(2, 10), st.integers(0, 30))
@settings(max_examples=20, deadline=None)
def test_flo_roundtrip_any_size(h, w, seed):
    import tempfile, os
    vec = np.random.default_rng(seed).standard_normal((h, w, 2)).astype(np.float32)
    fd, path = tempfile.mkstemp(suffix=".flo")
    os.close(fd)
    try:
        write_flo(vec, path)
        assert np.array_equal(read_flo(path).vectors, vec)
    finally:
        os.unlink(path)
