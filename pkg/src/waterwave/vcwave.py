"""Motion-aligned wavelet decomposition, inconsistency masks, and losses.

A window of frames is aligned to its first frame by composing per-pair
tracking flows (pair flow j satisfies warp(frame_{j+1}, flow_j) ~= frame_j,
so composed flows sample every frame along the trajectory through each
reference pixel).  The temporal wavelet transform runs on the aligned stack,
so its high band measures change along motion trajectories; the spatial
transform runs on the unaligned frames, so its high bands measure per-frame
detail.

The inconsistency mask flags voxels that change along trajectories (temporal
high band above beta0) while lying in spatially smooth areas (aggregated
spatial detail below beta1): flicker-like error rather than legitimate
moving texture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import autodiff as ad
from . import wavelet
from .errors import DataError
from .flow import FlowField, compose_flows


def _val(x) -> np.ndarray:
    return x.value if ad.is_tensor(x) else np.asarray(x)


@dataclass
class AlignedWindow:
    """Window frames resampled onto the grid of the window's first frame."""

    t0: int
    frames: object            # (W_t, H, W, C) Tensor or ndarray
    validity: np.ndarray      # (W_t, H, W) bool; 0 where a warp left the frame


@dataclass
class WaveletBands:
    """Joint temporal/spatial single-level decomposition of a frame window."""

    l_t: object               # (T//2, H, W, C) temporal low (trajectory means)
    h_t: object               # (T//2, H, W, C) temporal high (trajectory changes)
    l_xy: object              # (T, H//2, W//2, C) spatial low
    subbands: dict            # 'LH'/'HL'/'HH', each (T, H//2, W//2, C)
    validity_t: np.ndarray    # (T//2, H, W) pairwise-ANDed alignment validity
    window: tuple[int, int]
    source_shape: tuple
    truncated: bool           # True when an odd trailing frame was dropped


@dataclass
class InconsistencyMask:
    """Binary mask on the temporal-pair grid (T//2, 2*(H//2), 2*(W//2))."""

    values: np.ndarray
    beta0: float
    beta1: float


def align_stack(stack, pair_flows, t0: int = 0) -> AlignedWindow:
    """Align a (W_t, H, W, C) stack to its first frame via composed pair flows.

    ``pair_flows[j]`` maps positions in frame j to frame j+1 (tracking
    orientation); entries may be FlowFields, ndarrays, or live Tensors.
    Frame 0 is aligned to itself by the identity warp.
    """
    n = stack.shape[0]
    if len(pair_flows) != n - 1:
        raise DataError(f"need {n - 1} pair flows for a {n}-frame window, got {len(pair_flows)}")
    h, w = stack.shape[1], stack.shape[2]
    frames = [stack[0:1]]
    validity = [np.ones((h, w), dtype=bool)]
    composed = None
    comp_valid = None
    for j in range(n - 1):
        vec = pair_flows[j].vectors if isinstance(pair_flows[j], FlowField) else pair_flows[j]
        if composed is None:
            composed, comp_valid = vec, np.ones((h, w), dtype=bool)
            if isinstance(pair_flows[j], FlowField) and pair_flows[j].validity is not None:
                comp_valid = pair_flows[j].validity > 0
        else:
            composed, step_valid = compose_flows(vec, composed)
            comp_valid = comp_valid & step_valid
        warped, wvalid = ad.warp_bilinear(stack[j + 1], composed)
        frames.append(ad.reshape(warped, (1, h, w, warped.shape[-1]))
                      if ad.is_tensor(warped) else warped[None])
        validity.append(comp_valid & wvalid)
    return AlignedWindow(t0=t0, frames=ad.concat(frames, axis=0),
                         validity=np.stack(validity, axis=0))


def align_window(video: np.ndarray, window: tuple[int, int],
                 flows: list) -> AlignedWindow:
    """Convenience wrapper: slice ``window`` out of a full video and align it.

    ``flows`` covers consecutive pairs of the *full* video (flows[t] maps
    frame t positions into frame t+1).
    """
    t0, t1 = window
    if not (0 <= t0 < t1 <= video.shape[0]):
        raise DataError(f"window {window} outside video of {video.shape[0]} frames")
    return align_stack(video[t0:t1], flows[t0: t1 - 1], t0=t0)


def decompose_stack(stack, pair_flows, window: tuple[int, int]) -> WaveletBands:
    """Temporal DWT on the aligned stack + spatial DWT on the native frames."""
    aligned = align_stack(stack, pair_flows, t0=window[0])
    n = stack.shape[0]
    if n < 2:
        raise DataError("decomposition needs at least 2 frames")
    truncated = bool(n % 2)
    l_t, h_t = wavelet.dwt_temporal(aligned.frames)
    av = aligned.validity[: n - (n % 2)]
    validity_t = av[0::2] & av[1::2]
    l_xy, subbands = wavelet.dwt_spatial(stack)
    return WaveletBands(l_t=l_t, h_t=h_t, l_xy=l_xy, subbands=subbands,
                        validity_t=validity_t, window=window,
                        source_shape=tuple(_val(stack).shape), truncated=truncated)


def vcwave_decompose(video: np.ndarray, window: tuple[int, int],
                     flows: list) -> WaveletBands:
    """Public wrapper over decompose_stack for plain video arrays."""
    t0, t1 = window
    if not (0 <= t0 < t1 <= video.shape[0]):
        raise DataError(f"window {window} outside video of {video.shape[0]} frames")
    return decompose_stack(video[t0:t1], flows[t0: t1 - 1], window)


def _even_crop(a, h_even: int, w_even: int, spatial_axes=(1, 2)):
    idx = [slice(None)] * len(a.shape)
    idx[spatial_axes[0]] = slice(0, h_even)
    idx[spatial_axes[1]] = slice(0, w_even)
    return a[tuple(idx)]


def spatial_aggregate(bands: WaveletBands) -> np.ndarray:
    """Aggregated spatial-detail magnitude on the temporal-pair grid.

    The per-voxel max over {|LH|, |HL|, |HH|} (then over channels) is 2x
    nearest-upsampled back to pixel resolution, 3x3 box-averaged, and the two
    frames of each temporal pair are averaged.  This is the S that the mask's
    smoothness gate compares against beta1.
    """
    s0 = np.maximum(np.maximum(np.abs(_val(bands.subbands["LH"])),
                               np.abs(_val(bands.subbands["HL"]))),
                    np.abs(_val(bands.subbands["HH"]))).max(axis=-1)
    s_up = np.repeat(np.repeat(s0, 2, axis=1), 2, axis=2)
    s_box = ndimage.uniform_filter(s_up, size=(1, 3, 3), mode="nearest")
    n_pairs = _val(bands.h_t).shape[0]
    return 0.5 * (s_box[0: 2 * n_pairs: 2] + s_box[1: 2 * n_pairs: 2])


def inconsistency_mask(bands: WaveletBands, beta0: float = 1e-3,
                       beta1: float = 1e-2) -> InconsistencyMask:
    """Flag trajectory changes in spatially smooth areas.

    gate_t = ReLU(|H_t| - beta0) on the channel-max temporal high band;
    gate_s = ReLU(beta1 - S) with S from spatial_aggregate.  The mask is 1
    where both gates are strictly positive, and 0 wherever the alignment was
    invalid.
    """
    if beta0 <= 0 or beta1 <= 0:
        raise DataError(f"mask thresholds must be positive, got {beta0}, {beta1}")
    h_t = np.abs(_val(bands.h_t)).max(axis=-1)          # (Tp, H, W)
    hh, wh = _val(bands.subbands["LH"]).shape[1:3]
    he, we = 2 * hh, 2 * wh
    s_pair = spatial_aggregate(bands)
    gate_t = np.maximum(h_t[:, :he, :we] - beta0, 0.0)
    gate_s = np.maximum(beta1 - s_pair, 0.0)
    mask = ((gate_t > 0) & (gate_s > 0)).astype(h_t.dtype)
    mask *= bands.validity_t[:, :he, :we]
    ad.note_kinks(mask)
    return InconsistencyMask(values=mask, beta0=beta0, beta1=beta1)


def loss_tc(mask: InconsistencyMask, bands: WaveletBands):
    """Mean |mask * H_t| over valid voxels: temporal-consistency pressure.

    The mask is a constant gate; gradients flow through H_t only.
    """
    tp, he, we = mask.values.shape
    h_t = _even_crop(bands.h_t, he, we)
    valid = bands.validity_t[:, :he, :we]
    weights = (mask.values * valid)[..., None]
    channels = _val(bands.h_t).shape[-1]
    n = max(int(valid.sum()) * channels, 1)
    return ad.vsum(ad.absval(ad.mul(h_t, weights))) / n


def loss_detail(bands_f: WaveletBands, bands_v: WaveletBands):
    """Mean L1 distance between spatial high subbands of F and V."""
    total = None
    count = 0
    for key in ("LH", "HL", "HH"):
        diff = ad.vsum(ad.absval(ad.sub(bands_f.subbands[key], bands_v.subbands[key])))
        total = diff if total is None else total + diff
        count += int(np.prod(_val(bands_v.subbands[key]).shape))
    return total / max(count, 1)


def _nearest_axis(src_len: int, dst_len: int) -> np.ndarray:
    if src_len == dst_len:
        return np.arange(src_len)
    return np.minimum((np.arange(dst_len) * src_len) // dst_len, src_len - 1)


def resample_mask_nearest(values: np.ndarray, t_len: int, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resample of a (Tp, He, We) mask onto another band grid."""
    ti = _nearest_axis(values.shape[0], t_len)
    yi = _nearest_axis(values.shape[1], height)
    xi = _nearest_axis(values.shape[2], width)
    return values[np.ix_(ti, yi, xi)]


def loss_basic(bands_f: WaveletBands, bands_v: WaveletBands, mask: InconsistencyMask,
               mode: str = "complement"):
    """Masked L1 on the low bands (the data-fidelity term).

    mode='complement' weights by (1 - mask): fit V everywhere except flagged
    inconsistencies, which the temporal loss is left free to repair.
    mode='mask' weights by the mask itself.  Weights are nearest-resampled to
    each band's grid and zeroed where either alignment was invalid.
    """
    if mode == "complement":
        w_pair = 1.0 - mask.values
    elif mode == "mask":
        w_pair = mask.values
    else:
        raise DataError(f"unknown basic-loss mode {mode!r}")
    lt_f, lt_v = bands_f.l_t, bands_v.l_t
    tp, h, w = _val(lt_f).shape[:3]
    w_t = resample_mask_nearest(w_pair, tp, h, w)
    w_t = w_t * bands_f.validity_t * bands_v.validity_t
    term_t = ad.vsum(ad.absval(ad.sub(lt_f, lt_v)) * w_t[..., None])
    term_t = term_t / max(int(np.prod(_val(lt_f).shape)), 1)
    lxy_f, lxy_v = bands_f.l_xy, bands_v.l_xy
    tn, hh, wh = _val(lxy_f).shape[:3]
    w_xy = resample_mask_nearest(w_pair, tn, hh, wh)
    term_xy = ad.vsum(ad.absval(ad.sub(lxy_f, lxy_v)) * w_xy[..., None])
    term_xy = term_xy / max(int(np.prod(_val(lxy_f).shape)), 1)
    return term_t + term_xy
