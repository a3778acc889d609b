"""Optical flow estimation, warping, flow files, and transmission guidance.

Flow convention: ``estimate_flow_hs(i1, i2)`` returns a field on i2's pixel
grid whose vectors point into i1, i.e. ``warp(i1, flow) ~= i2``.  Equivalently
the vector at (x, y) says where the content now at (x, y) is found in i1.
Channels are ordered (dx, dy).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import autodiff as ad
from . import encoding, nn
from .errors import DataError

FLO_MAGIC = 202021.25  # the bytes 'PIEH' read as a little-endian float32

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class FlowField:
    """A per-pixel displacement field (H, W, 2) float32 with provenance tag."""

    vectors: np.ndarray
    source: str = "external"  # 'hs' | 'external' | 'rectified' | 'synthetic' | 'zero'
    validity: np.ndarray | None = None  # None means fully valid

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 2:
            raise DataError(f"flow must be (H, W, 2), got {v.shape}")
        self.vectors = v

    @property
    def shape(self):
        return self.vectors.shape


def zero_flow(height: int, width: int) -> FlowField:
    return FlowField(np.zeros((height, width, 2), dtype=np.float32), source="zero")


def warp(image, flow):
    """Backward-warp an (H, W, C) image by a flow field; see autodiff.warp_bilinear.

    Accepts FlowField, ndarray, or Tensor flows.  Returns (warped, validity).
    """
    vec = flow.vectors if isinstance(flow, FlowField) else flow
    out, valid = ad.warp_bilinear(image, vec)
    if isinstance(flow, FlowField) and flow.validity is not None:
        valid = valid & (flow.validity > 0)
    return out, valid


def compose_flows(f_ab, f_bc):
    """Chain two warps: if warp(A, f_ab) ~= B and warp(B, f_bc) ~= C then
    warp(A, compose_flows(f_ab, f_bc)) ~= C.

    f_ac(x) = f_bc(x) + f_ab sampled at x + f_bc(x); validities are ANDed.
    Works on FlowFields (numpy) or raw Tensors/ndarrays for the training path.
    """
    a_field = isinstance(f_ab, FlowField)
    b_field = isinstance(f_bc, FlowField)
    va = f_ab.vectors if a_field else f_ab
    vb = f_bc.vectors if b_field else f_bc
    sampled, valid = ad.warp_bilinear(va, vb)
    out = ad.add(vb, sampled)
    if a_field and f_ab.validity is not None:
        sval, _ = ad.warp_bilinear(f_ab.validity[:, :, None].astype(np.float32), vb)
        valid = valid & (np.asarray(sval if not ad.is_tensor(sval) else sval.value)[:, :, 0] > 0.999)
    if b_field and f_bc.validity is not None:
        valid = valid & (f_bc.validity > 0)
    if a_field and b_field:
        return FlowField(out.astype(np.float32), source="composed", validity=valid)
    return out, valid


def _to_gray(frame: np.ndarray) -> np.ndarray:
    if frame.shape[-1] == 1:
        return frame[..., 0].astype(np.float64)
    return frame.astype(np.float64) @ _LUMA


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def _resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    zoom = (shape[0] / img.shape[0], shape[1] / img.shape[1])
    return ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=True)


_HS_AVG = np.array([[0.0, 0.25, 0.0], [0.25, 0.0, 0.25], [0.0, 0.25, 0.0]])


def estimate_flow_hs(i1: np.ndarray, i2: np.ndarray, smoothness: float = 0.1,
                     iterations: int = 100, levels: int = 3) -> FlowField:
    """Horn-Schunck flow with a coarse-to-fine pyramid.

    Returns the field f with warp(i1, f) ~= i2 (defined on i2's grid).  Color
    frames are reduced to luma first.  The data term is re-linearized around
    the warped i1 every 20 Jacobi iterations.
    """
    g1, g2 = _to_gray(np.asarray(i1)), _to_gray(np.asarray(i2))
    if g1.shape != g2.shape:
        raise DataError("flow inputs must share a shape")
    if min(g1.shape) < 8:
        raise DataError("flow estimation needs frames of at least 8x8")
    pyr1, pyr2 = [g1], [g2]
    for _ in range(levels - 1):
        if min(pyr1[-1].shape) < 16:
            break
        pyr1.append(_downsample2(pyr1[-1]))
        pyr2.append(_downsample2(pyr2[-1]))
    u = np.zeros_like(pyr1[-1])
    v = np.zeros_like(pyr1[-1])
    for lev in range(len(pyr1) - 1, -1, -1):
        a, b = pyr1[lev], pyr2[lev]
        if u.shape != a.shape:
            u = _resize_bilinear(u, a.shape) * 2.0
            v = _resize_bilinear(v, a.shape) * 2.0
        done = 0
        while done < iterations:
            chunk = min(20, iterations - done)
            warped, _ = ad.warp_bilinear(a[:, :, None], np.stack([u, v], axis=-1))
            warped = warped[:, :, 0]
            iy, ix = np.gradient(0.5 * (warped + b))
            it = warped - b
            den = smoothness + ix * ix + iy * iy
            # The data term is linearized at the current flow (u0, v0): it already
            # accounts for that motion, so only the increment is charged.
            u0, v0 = u, v
            for _ in range(chunk):
                ubar = ndimage.convolve(u, _HS_AVG, mode="nearest")
                vbar = ndimage.convolve(v, _HS_AVG, mode="nearest")
                t = (ix * (ubar - u0) + iy * (vbar - v0) + it) / den
                u = ubar - ix * t
                v = vbar - iy * t
            done += chunk
    return FlowField(np.stack([u, v], axis=-1).astype(np.float32), source="hs")


@dataclass
class TransmissionMap:
    """Per-pixel transmission in [0.1, 1] plus the estimated airlight color."""

    values: np.ndarray
    airlight: np.ndarray


def estimate_transmission(frame: np.ndarray, omega: float = 0.95,
                          patch_radius: int = 3) -> TransmissionMap:
    """Dark-channel transmission: t = clamp(1 - omega * dark(I / A), 0.1, 1).

    The airlight A is the mean color of the brightest 0.1% of dark-channel
    pixels (at least one pixel).
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise DataError("transmission needs an (H, W, C) frame")
    size = 2 * patch_radius + 1
    dark_raw = ndimage.minimum_filter(frame.min(axis=2), size=size, mode="nearest")
    n_top = max(1, int(round(dark_raw.size * 0.001)))
    flat = dark_raw.ravel()
    top = np.argpartition(flat, -n_top)[-n_top:]
    ys, xs = np.unravel_index(top, dark_raw.shape)
    airlight = np.maximum(frame[ys, xs].mean(axis=0), 1e-6)
    dark_norm = ndimage.minimum_filter((frame / airlight).min(axis=2), size=size, mode="nearest")
    t = np.clip(1.0 - omega * dark_norm, 0.1, 1.0)
    return TransmissionMap(values=t, airlight=airlight)


def transmission_guidance(t_cur: np.ndarray, t_next: np.ndarray,
                          base_flow: FlowField) -> np.ndarray:
    """Stack the 4 guidance channels for flow rectification.

    [t_t, warp(t_{t+1}, base), box3(t_t), box3(warp(t_{t+1}, base))], where the
    warp follows the base flow so both transmissions describe the same scene
    point.  3x3 box means use edge replication.
    """
    warped, _ = warp(t_next[:, :, None].astype(np.float64), base_flow)
    warped = warped[:, :, 0]
    box_cur = ndimage.uniform_filter(t_cur, size=3, mode="nearest")
    box_warp = ndimage.uniform_filter(warped, size=3, mode="nearest")
    return np.stack([t_cur, warped, box_cur, box_warp], axis=-1)


def tfr_coords(base_flow: FlowField, t_index: int, full_shape: tuple[int, int, int]) -> np.ndarray:
    """Normalized (x, y, t) coordinates of the flow-displaced positions.

    The displaced point (x + dx, y + dy) lives in frame t_index + 1, so it is
    encoded at that time coordinate.  Out-of-range positions are clamped by
    the encoder.
    """
    t_full, h, w = full_shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    vec = base_flow.vectors.astype(np.float64)
    px = (xs + vec[:, :, 0]) / (w - 1)
    py = (ys + vec[:, :, 1]) / (h - 1)
    pt = np.full_like(px, (t_index + 1) / (t_full - 1) if t_full > 1 else 0.0)
    return np.stack([px.ravel(), py.ravel(), pt.ravel()], axis=-1)


def rectify_flow(base_flow: FlowField, prepared, sigma: np.ndarray, tables: list,
                 store: "nn.ParamStore", spec: "nn.MlpSpec", alpha: float,
                 prefix: str = "tfr"):
    """base + MLP(concat(hash encoding at displaced coords, guidance)).

    `prepared` is encoding.encode_prepare of tfr_coords(base_flow, ...), which
    callers cache because the base flow is fixed.  Returns a Tensor (H, W, 2)
    when the tables/MLP are live, else an ndarray.  With a zero-initialized
    final layer the result equals the base flow exactly.
    """
    h, w = base_flow.vectors.shape[:2]
    emb = encoding.encode_apply(tables, prepared, alpha)
    feats = ad.concat([emb, sigma.reshape(h * w, sigma.shape[-1]).astype(np.float32)], axis=1)
    res = nn.mlp_forward(store, prefix, spec, feats)
    res = ad.reshape(res, (h, w, 2))
    return ad.add(res, base_flow.vectors)


def read_flo(path: str | Path) -> FlowField:
    """Read a Middlebury .flo file (magic float32, int32 w/h, interleaved dx,dy)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if len(raw) < 12:
        raise DataError(f"{path}: truncated .flo header")
    magic, w, h = struct.unpack("<fii", raw[:12])
    if abs(magic - FLO_MAGIC) > 1e-3:
        raise DataError(f"{path}: bad .flo magic {magic!r}")
    if w <= 0 or h <= 0 or len(raw) != 12 + 8 * w * h:
        raise DataError(f"{path}: size mismatch for {w}x{h} flow")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return FlowField(data.copy(), source="external")


def write_flo(flow: FlowField | np.ndarray, path: str | Path) -> None:
    """Write a .flo file atomically (temp file + rename)."""
    vec = flow.vectors if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float32)
    h, w = vec.shape[:2]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(vec.astype("<f4").tobytes())
    tmp.replace(path)
