"""Closed-form temporal-consistency filter and its PDE oracle.

Each output frame blends the current enhanced frame with the motion-warped
previous output in the Fourier domain: high spatial frequencies keep the
current frame (detail fidelity), low frequencies follow the warped previous
frame (temporal consistency).  The blend is exactly the screened-Poisson
equation  -lap(F) + w F = -lap(V_t) + w * warped_prev,  which a Jacobi solver
reproduces independently.

Frequency convention: both routes use the symbol of the periodic 5-point
Laplacian, v2(k) = 4 sin^2(pi kx / W) + 4 sin^2(pi ky / H), so they agree to
solver tolerance at every frequency (the continuous symbol (2 pi k / W)^2
matches only in the low-frequency limit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VideoVolume
from .errors import DataError, NumericalError
from .flow import FlowField, warp


@dataclass(frozen=True)
class FilterParams:
    """Screening weight of the consistency filter.

    weight w > 0 trades detail fidelity (small w at a given frequency keeps
    the warped previous frame) against consistency; w = 1 is the published
    setting.  Fidelity gain at frequency bin k is v2(k) / (v2(k) + w) with the
    discrete Laplacian symbol v2 above.
    """

    weight: float = 1.0

    def __post_init__(self):
        if not (self.weight > 0 and np.isfinite(self.weight)):
            raise DataError("filter weight must be positive and finite")


def laplacian_symbol(height: int, width: int) -> np.ndarray:
    """Eigenvalues of the negated periodic 5-point Laplacian on an H x W grid."""
    ky = np.fft.fftfreq(height)  # cycles per sample
    kx = np.fft.fftfreq(width)
    sy = 4.0 * np.sin(np.pi * ky) ** 2
    sx = 4.0 * np.sin(np.pi * kx) ** 2
    return sy[:, None] + sx[None, :]


def consistency_filter_step(v_t: np.ndarray, warped_prev: np.ndarray,
                            params: FilterParams = FilterParams()) -> np.ndarray:
    """One filter step: spec(F) = v2/(v2+w) spec(V_t) + w/(v2+w) spec(warped_prev)."""
    v_t = np.asarray(v_t, dtype=np.float64)
    warped_prev = np.asarray(warped_prev, dtype=np.float64)
    if v_t.shape != warped_prev.shape or v_t.ndim != 3:
        raise DataError("filter inputs must be matching (H, W, C) frames")
    v2 = laplacian_symbol(*v_t.shape[:2])[:, :, None]
    w = params.weight
    fv = np.fft.fft2(v_t, axes=(0, 1))
    fp = np.fft.fft2(warped_prev, axes=(0, 1))
    out = np.fft.ifft2((v2 * fv + w * fp) / (v2 + w), axes=(0, 1)).real
    return out


def screened_poisson_solve(v_t: np.ndarray, warped_prev: np.ndarray, weight: float = 1.0,
                           tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Solve -lap(F) + w F = -lap(V_t) + w * warped_prev by Jacobi iteration.

    Periodic 5-point Laplacian; iterates until the max update falls below tol.
    Independent oracle for consistency_filter_step.
    """
    v_t = np.asarray(v_t, dtype=np.float64)
    warped_prev = np.asarray(warped_prev, dtype=np.float64)
    if v_t.shape != warped_prev.shape or v_t.ndim != 3:
        raise DataError("solver inputs must be matching (H, W, C) frames")
    if weight <= 0:
        raise DataError("screening weight must be positive")

    def neighbor_sum(f):
        return (np.roll(f, 1, axis=0) + np.roll(f, -1, axis=0)
                + np.roll(f, 1, axis=1) + np.roll(f, -1, axis=1))

    rhs = (4.0 * v_t - neighbor_sum(v_t)) + weight * warped_prev
    f = v_t.copy()
    denom = 4.0 + weight
    for _ in range(max_iter):
        f_new = (rhs + neighbor_sum(f)) / denom
        delta = np.max(np.abs(f_new - f))
        f = f_new
        if delta < tol:
            return f
    raise NumericalError(f"Jacobi solver did not converge below {tol} in {max_iter} iterations")


def filter_video(video: VideoVolume, flows: list[FlowField] | None = None,
                 params: FilterParams = FilterParams()) -> VideoVolume:
    """Filter a whole video recursively: F_0 = V_0, F_t from V_t and warp(F_{t-1}).

    ``flows[t-1]`` carries frame t-1 onto frame t's grid (warp(F_{t-1},
    flows[t-1]) ~= F_t); None means zero flow throughout.  Pixels whose warp
    leaves the frame fall back to V_t before filtering.
    """
    frames = video.frames
    t_len = len(frames)
    if flows is not None and len(flows) != t_len - 1:
        raise DataError(f"need {t_len - 1} flows for {t_len} frames, got {len(flows)}")
    out = [frames[0]]
    for t in range(1, t_len):
        if flows is None:
            warped, valid = out[-1], np.ones(frames.shape[1:3], dtype=bool)
        else:
            warped, valid = warp(out[-1], flows[t - 1])
        warped = np.where(valid[:, :, None], warped, frames[t])
        out.append(consistency_filter_step(frames[t], warped, params))
    return VideoVolume(np.clip(np.stack(out), 0.0, 1.0), frame_rate=video.frame_rate)
