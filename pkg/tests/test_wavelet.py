import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from waterwave.wavelet import (LiftingFilters, lift_forward, lift_inverse,
                               dwt_temporal, dwt_spatial, idwt_spatial,
                               wavedec, waverec, haar_coefficient,
                               haar_lifting_normalization)
from waterwave.errors import DataError


def test_haar_lift_two_samples():
    low, high = lift_forward(np.array([1.0, 3.0]))
    assert low.tolist() == [2.0]
    assert high.tolist() == [2.0]


def test_haar_lift_four_samples():
    low, high = lift_forward(np.array([1.0, 3.0, 5.0, 9.0]))
    assert low.tolist() == [2.0, 7.0]
    assert high.tolist() == [2.0, 4.0]


def test_haar_lift_inverse_roundtrip():
    x = np.array([0.3, -1.2, 4.0, 4.0, 7.5, 2.25])
    low, high = lift_forward(x)
    assert lift_inverse(low, high).tolist() == x.tolist()


def test_odd_length_is_rejected():
    # trimming odd windows is the caller's job; the primitive stays strict
    with pytest.raises(DataError):
        lift_forward(np.array([1.0, 3.0, 100.0]))


taps = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=3).map(tuple)


@given(st.integers(1, 5), taps, taps, st.integers(0, 10))
@settings(max_examples=60, deadline=None)
def test_perfect_reconstruction_any_taps(half_len, predict, update, seed):
    """The lifting ladder inverts exactly for arbitrary taps."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(2 * half_len)
    filt = LiftingFilters(predict, update, "fuzz")
    low, high = lift_forward(x, filt)
    back = lift_inverse(low, high, filt)
    assert np.max(np.abs(back - x)) < 1e-12


@given(st.integers(1, 4), st.integers(0, 10))
@settings(max_examples=30, deadline=None)
def test_wavedec_waverec_roundtrip(levels, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(2 ** (levels + 2))
    coeffs = wavedec(x, levels)
    assert len(coeffs) == levels + 1
    assert np.max(np.abs(waverec(coeffs) - x)) < 1e-12


def test_wavedec_rejects_matrix():
    with pytest.raises(DataError):
        wavedec(np.zeros((4, 4)), 1)


def test_cascade_matches_quadrature_oracle():
    """Every cascaded high band equals the orthonormal Haar analysis
    coefficients up to the fixed per-level factor, checked against direct
    quadrature of F * psi_{j,k}."""
    rng = np.random.default_rng(7)
    m = 5
    samples = rng.standard_normal(2 ** m)
    coeffs = wavedec(samples, m)
    for level in range(m):
        j = m - 1 - level
        c = haar_lifting_normalization(j)
        for k in range(2 ** j):
            want = haar_coefficient(samples, j, k)
            assert c * coeffs[level][k] == pytest.approx(want, abs=1e-12)


def test_quadrature_needs_power_of_two():
    with pytest.raises(DataError):
        haar_coefficient(np.zeros(12), 0, 0)


def test_dwt_temporal_pairs_frames():
    video = np.zeros((4, 2, 2, 1))
    video[1] = 1.0
    video[3] = 0.5
    low, high = dwt_temporal(video)
    assert low.shape == (2, 2, 2, 1) and high.shape == (2, 2, 2, 1)
    assert low[0].flatten().tolist() == [0.5] * 4    # mean of frames 0,1
    assert high[0].flatten().tolist() == [1.0] * 4   # frame1 - frame0
    assert high[1].flatten().tolist() == [0.5] * 4


def test_dwt_spatial_roundtrip_and_shapes():
    rng = np.random.default_rng(3)
    frames = rng.standard_normal((2, 8, 6, 3))
    ll, subbands = dwt_spatial(frames)
    assert ll.shape == (2, 4, 3, 3)
    assert set(subbands) == {"LH", "HL", "HH"}
    back = idwt_spatial(ll, subbands)
    assert np.max(np.abs(back - frames)) < 1e-12


def test_dwt_spatial_constant_frame_has_no_detail():
    frames = np.full((1, 4, 4, 1), 0.7)
    ll, subbands = dwt_spatial(frames)
    assert np.allclose(ll, 0.7)
    for band in subbands.values():
        assert np.max(np.abs(band)) == 0.0
