import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from waterwave.core import VideoVolume
from waterwave.prior import (FilterParams, laplacian_symbol,
                             consistency_filter_step, screened_poisson_solve,
                             filter_video)
from waterwave.pipeline import flicker_energy
from waterwave.errors import DataError


def test_laplacian_symbol_dc_and_nyquist():
    v2 = laplacian_symbol(8, 8)
    assert v2[0, 0] == 0.0
    assert v2[4, 4] == pytest.approx(8.0)       # both axes at Nyquist
    assert v2.min() == 0.0 and v2.max() == pytest.approx(8.0)


def test_filter_params_validation():
    with pytest.raises(DataError):
        FilterParams(weight=0.0)
    with pytest.raises(DataError):
        FilterParams(weight=-1.0)
    with pytest.raises(DataError):
        FilterParams(weight=np.inf)


def test_filter_dc_follows_warped_prev():
    """Constant frames carry only the zero frequency, where fidelity gain is 0."""
    v_t = np.full((8, 8, 1), 0.9)
    prev = np.full((8, 8, 1), 0.3)
    out = consistency_filter_step(v_t, prev)
    assert np.allclose(out, 0.3, atol=1e-12)


def test_filter_nyquist_checkerboard_gain():
    """At the double-Nyquist frequency the fidelity gain is 8/9 for weight 1."""
    yy, xx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    checker = ((-1.0) ** (yy + xx))[:, :, None]
    out = consistency_filter_step(checker, np.zeros_like(checker))
    assert np.allclose(out, checker * (8.0 / 9.0), atol=1e-12)


def test_filter_identical_inputs_are_fixed_points():
    rng = np.random.default_rng(0)
    v = rng.random((10, 12, 3))
    out = consistency_filter_step(v, v.copy())
    assert np.allclose(out, v, atol=1e-12)


def test_filter_weight_trades_fidelity_for_consistency():
    yy, xx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    checker = ((-1.0) ** (yy + xx))[:, :, None]
    zero = np.zeros_like(checker)
    strong = consistency_filter_step(checker, zero, FilterParams(weight=10.0))
    weak = consistency_filter_step(checker, zero, FilterParams(weight=0.1))
    assert np.abs(strong).max() < np.abs(weak).max()


def test_filter_matches_iterative_screened_poisson():
    """The spectral step must agree with a long Jacobi solve of the same
    screened system."""
    rng = np.random.default_rng(1)
    v_t = rng.random((20, 24, 3))
    prev = rng.random((20, 24, 3))
    fft_out = consistency_filter_step(v_t, prev)
    jac_out = screened_poisson_solve(v_t, prev, weight=1.0, tol=1e-10)
    assert np.abs(fft_out - jac_out).max() < 1e-5


def test_filter_requires_3d_arrays():
    with pytest.raises(DataError):
        consistency_filter_step(np.zeros((8, 8)), np.zeros((8, 8)))


def test_filter_video_first_frame_is_untouched():
    rng = np.random.default_rng(2)
    vid = VideoVolume(rng.random((4, 8, 8, 3)))
    out = filter_video(vid)
    assert np.array_equal(out.frames[0], vid.frames[0])
    assert out.shape == vid.shape


def test_filter_video_reduces_flicker():
    rng = np.random.default_rng(3)
    base = rng.random((8, 8, 3)) * 0.5 + 0.25
    gains = 1.0 + 0.1 * (-1.0) ** np.arange(12)
    vid = VideoVolume(np.clip(base[None] * gains[:, None, None, None], 0, 1))
    out = filter_video(vid)
    assert flicker_energy(out) < 0.1 * flicker_energy(vid)


def test_filter_video_checks_flow_count():
    vid = VideoVolume(np.zeros((3, 8, 8, 3)))
    from waterwave.flow import zero_flow
    with pytest.raises(DataError):
        filter_video(vid, flows=[zero_flow(8, 8)])


@given(st.floats(0.05, 20.0), st.integers(0, 15))
@settings(max_examples=20, deadline=None)
def test_filter_output_between_inputs_spectrally(weight, seed):
    """Every Fourier mode of the output lies between the two inputs' modes."""
    rng = np.random.default_rng(seed)
    v_t = rng.random((8, 8, 1))
    prev = rng.random((8, 8, 1))
    out = consistency_filter_step(v_t, prev, FilterParams(weight=weight))
    fo = np.fft.fft2(out[:, :, 0])
    fv = np.fft.fft2(v_t[:, :, 0])
    fp = np.fft.fft2(prev[:, :, 0])
    gap_v = np.abs(fo - fv)
    gap_p = np.abs(fo - fp)
    total = np.abs(fv - fp)
    assert np.all(gap_v + gap_p <= total + 1e-9)
