"""Lifting-scheme wavelet transforms along time and space.

The forward lift splits a signal into even/odd samples, then

    high = odd - Predict(even)
    low  = even + Update(high)

and the inverse exactly reverses the two steps, so reconstruction is perfect
for *any* predict/update taps.  The default Haar instantiation uses
Predict = identity and Update = 0.5, i.e. high = odd - even and
low = even + 0.5 * high (an unnormalized pairwise mean/difference).

All transforms work on plain ndarrays or on autodiff Tensors (the lifting
steps are linear, so gradients flow through slicing and arithmetic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError


@dataclass(frozen=True)
class LiftingFilters:
    """Predict/update taps for one lifting stage.

    Predict taps are anchored forward: Predict(x)[i] = sum_k p[k] * x[i + k].
    Update taps are anchored backward: Update(h)[i] = sum_k u[k] * h[i - (L-1) + k].
    Out-of-range samples are edge-replicated.  Perfect reconstruction holds for
    any taps because the inverse replays the same operators in reverse.
    """

    predict: tuple[float, ...] = (1.0,)
    update: tuple[float, ...] = (0.5,)
    name: str = "haar"

    @classmethod
    def haar(cls) -> "LiftingFilters":
        return cls((1.0,), (0.5,), "haar")


def _shift_clamp(x, axis: int, offset: int):
    """x shifted by `offset` along `axis`, replicating the edge sample."""
    if offset == 0:
        return x
    n = x.shape[axis]
    idx = [slice(None)] * len(x.shape)

    def take(a, b):
        idx2 = list(idx)
        idx2[axis] = slice(a, b)
        return x[tuple(idx2)]

    if offset > 0:
        k = min(offset, n - 1)
        body = take(k, n)
        edge = take(n - 1, n)
        parts = [body] + [edge] * (n - body.shape[axis])
    else:
        k = min(-offset, n - 1)
        body = take(0, n - k)
        edge = take(0, 1)
        parts = [edge] * (n - body.shape[axis]) + [body]
    if len(parts) == 1:
        return parts[0]
    return ad.concat(parts, axis=axis)


def _apply_taps(x, taps: tuple[float, ...], axis: int, anchor: str):
    out = None
    length = len(taps)
    for k, c in enumerate(taps):
        off = k if anchor == "forward" else k - (length - 1)
        term = float(c) * _shift_clamp(x, axis, off)
        out = term if out is None else out + term
    return out


def _slice_step(x, axis: int, start: int, stop: int | None = None):
    idx = [slice(None)] * len(x.shape)
    idx[axis] = slice(start, stop, 2)
    return x[tuple(idx)]


def lift_forward(signal, filters: LiftingFilters = LiftingFilters.haar(), axis: int = 0):
    """One lifting stage along `axis`; odd trailing samples must be trimmed first.

    Returns (low, high), each of half length along `axis`.
    """
    n = signal.shape[axis]
    if n < 2 or n % 2 != 0:
        raise DataError(f"lifting needs an even length >= 2 along axis {axis}, got {n}")
    even = _slice_step(signal, axis, 0)
    odd = _slice_step(signal, axis, 1)
    high = odd - _apply_taps(even, filters.predict, axis, "forward")
    low = even + _apply_taps(high, filters.update, axis, "backward")
    return low, high


def lift_inverse(low, high, filters: LiftingFilters = LiftingFilters.haar(), axis: int = 0):
    """Exact inverse of lift_forward (same taps, steps undone in reverse order)."""
    if low.shape != high.shape:
        raise DataError("low/high band shapes must match")
    even = low - _apply_taps(high, filters.update, axis, "backward")
    odd = high + _apply_taps(even, filters.predict, axis, "forward")
    even_v = even.value if ad.is_tensor(even) else np.asarray(even)
    shape = list(even_v.shape)
    shape[axis] *= 2
    if ad.is_tensor(even) or ad.is_tensor(odd):
        # Interleave via concat along a fresh axis, then reshape back.
        a = ad.reshape(even, _expand_shape(even_v.shape, axis))
        b = ad.reshape(odd, _expand_shape(even_v.shape, axis))
        merged = ad.concat([a, b], axis=axis + 1)
        return ad.reshape(merged, tuple(shape))
    out = np.empty(shape, dtype=np.result_type(even_v, odd))
    idx_e = [slice(None)] * len(shape)
    idx_o = [slice(None)] * len(shape)
    idx_e[axis] = slice(0, None, 2)
    idx_o[axis] = slice(1, None, 2)
    out[tuple(idx_e)] = even_v
    out[tuple(idx_o)] = odd
    return out


def _expand_shape(shape: tuple, axis: int) -> tuple:
    return shape[: axis + 1] + (1,) + shape[axis + 1 :]


def dwt_temporal(video, filters: LiftingFilters = LiftingFilters.haar()):
    """Single-level lift along the time axis of a (T, H, W, C) volume.

    An odd trailing frame is dropped (callers record the truncation).
    Returns (low, high) of shape (T//2, H, W, C).
    """
    t = video.shape[0]
    if t < 2:
        raise DataError("temporal transform needs at least 2 frames")
    if t % 2 != 0:
        video = video[: t - 1]
    return lift_forward(video, filters, axis=0)


def dwt_spatial(frames, filters: LiftingFilters = LiftingFilters.haar()):
    """Separable single-level lift over H and W of a (T, H, W, C) volume.

    Returns (LL, {"LH": ..., "HL": ..., "HH": ...}), each (T, H//2, W//2, C).
    Subband letters are ordered (x, y): HL is high-pass along width and
    low-pass along height, so vertical stripes land in HL.  Odd trailing
    rows/columns are dropped.
    """
    h, w = frames.shape[1], frames.shape[2]
    if h < 2 or w < 2:
        raise DataError("spatial transform needs frames of at least 2x2")
    if h % 2 != 0:
        frames = frames[:, : h - 1]
    if w % 2 != 0:
        frames = frames[:, :, : w - 1]
    lx, hx = lift_forward(frames, filters, axis=2)
    ll, lh = lift_forward(lx, filters, axis=1)
    hl, hh = lift_forward(hx, filters, axis=1)
    return ll, {"LH": lh, "HL": hl, "HH": hh}


def idwt_spatial(ll, subbands: dict, filters: LiftingFilters = LiftingFilters.haar()):
    """Inverse of dwt_spatial (up to any rows/columns the forward pass dropped)."""
    lx = lift_inverse(ll, subbands["LH"], filters, axis=1)
    hx = lift_inverse(subbands["HL"], subbands["HH"], filters, axis=1)
    return lift_inverse(lx, hx, filters, axis=2)


def wavedec(signal: np.ndarray, levels: int,
            filters: LiftingFilters = LiftingFilters.haar()) -> list[np.ndarray]:
    """Multi-level 1-D cascade: [high_0, high_1, ..., low_final].

    Level 0 is the finest (first) lifting pass; each pass halves the signal.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise DataError("wavedec expects a 1-d signal")
    out = []
    cur = signal
    for _ in range(levels):
        low, high = lift_forward(cur, filters, axis=0)
        out.append(high)
        cur = low
    out.append(cur)
    return out


def waverec(coeffs: list[np.ndarray],
            filters: LiftingFilters = LiftingFilters.haar()) -> np.ndarray:
    """Inverse of wavedec."""
    cur = coeffs[-1]
    for high in reversed(coeffs[:-1]):
        cur = lift_inverse(cur, high, filters, axis=0)
    return cur


def haar_coefficient(samples: np.ndarray, j: int, k: int) -> float:
    """Orthonormal Haar analysis coefficient b(j, k) = 2^(j/2) * integral F(t) psi(2^j t - k) dt.

    `samples` is F sampled on a uniform grid over [0, 1) (piecewise-constant
    quadrature, exact when the grid refines the wavelet's support).  psi is +1
    on [0, 1/2), -1 on [1/2, 1).

    Independent oracle for the lifting cascade: with m = log2(len(samples)),
    the cascade's level-l high band (l = m - 1 - j lifting passes) satisfies

        b(j, k) = -(1/2) * 2^(-j/2) * high_l[k]

    because the unnormalized lift computes block-mean differences (odd - even)
    while psi weights the earlier half-interval positively.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    if n < 2 or n & (n - 1):
        raise DataError("quadrature needs a power-of-two sample count")
    t = (np.arange(n) + 0.0) / n
    u = (2.0 ** j) * t - k
    psi = np.where((u >= 0) & (u < 0.5), 1.0, np.where((u >= 0.5) & (u < 1.0), -1.0, 0.0))
    return float(2.0 ** (j / 2.0) * np.sum(samples * psi) / n)


def haar_lifting_normalization(j: int) -> float:
    """Factor c_j with b(j, k) = c_j * high_l[k] for the cascaded Haar lift."""
    return -0.5 * 2.0 ** (-j / 2.0)
