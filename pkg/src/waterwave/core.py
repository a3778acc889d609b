"""Video volumes, frame-sequence I/O, normalized coordinates, and PSNR.

A video is a float array of shape (T, H, W, C) with values in [0, 1].
Frame sequences on disk are numbered ``frame_%05d.png`` (or ``.ppm``),
8-bit, starting at index 0 with no gaps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

_FRAME_RE = re.compile(r"^frame_(\d{5})\.(png|ppm)$")


@dataclass
class VideoVolume:
    """A video as a (T, H, W, C) float64 array in [0, 1], plus frame-rate metadata.

    The pixel array is frozen after validation; treat volumes as immutable.
    """

    frames: np.ndarray
    frame_rate: float = 24.0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 4:
            raise DataError(f"video must be 4-d (T, H, W, C), got shape {f.shape}")
        t, h, w, c = f.shape
        if t < 1:
            raise DataError("video needs at least one frame")
        if h < 2 or w < 2:
            raise DataError(f"frames must be at least 2x2, got {h}x{w}")
        if c not in (1, 3):
            raise DataError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(f)):
            raise DataError("video contains non-finite values")
        if f.min() < 0.0 or f.max() > 1.0:
            raise DataError("video values must lie in [0, 1]")
        f.flags.writeable = False
        object.__setattr__(self, "frames", f)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.frames.shape

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class CoordGrid:
    """Normalized (t, y, x) coordinates for a window of frames.

    ``coords`` has shape (T_window, H, W, 3) with channels ordered (x, y, t),
    each in [0, 1].  The time axis is normalized over the *full* video length,
    so windows carry their global position.
    """

    coords: np.ndarray
    window: tuple[int, int]
    full_length: int


def _axis_coords(n: int) -> np.ndarray:
    # A single-sample axis maps to 0; otherwise endpoints map to 0 and 1.
    if n == 1:
        return np.zeros(1)
    return np.arange(n, dtype=np.float64) / (n - 1)


def normalized_coords(window: tuple[int, int], full_length: int, height: int, width: int) -> CoordGrid:
    """Build the normalized coordinate grid for frames ``window`` of a video.

    ``window`` is a half-open (start, stop) frame range.  Voxel (t, i, j)
    maps to (x, y, t) = (j/(W-1), i/(H-1), t/(T_full-1)).
    """
    t0, t1 = window
    if not (0 <= t0 < t1 <= full_length):
        raise DataError(f"window {window} outside video of length {full_length}")
    if height < 2 or width < 2:
        raise DataError("grid needs height and width of at least 2")
    ts = _axis_coords(full_length)[t0:t1]
    ys = _axis_coords(height)
    xs = _axis_coords(width)
    tt, yy, xx = np.meshgrid(ts, ys, xs, indexing="ij")
    coords = np.stack([xx, yy, tt], axis=-1)
    return CoordGrid(coords=coords, window=(t0, t1), full_length=full_length)


def load_frames(directory: str | Path) -> VideoVolume:
    """Load a numbered frame sequence from ``directory`` into a VideoVolume.

    Accepts 8-bit grayscale or RGB frames named frame_00000.png/.ppm onward;
    values map to [0, 1] via v/255.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    found = {}
    for p in sorted(directory.iterdir()):
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise DataError(f"no frame_%05d.png or .ppm files in {directory}")
    indices = sorted(found)
    if indices[0] != 0 or indices != list(range(len(indices))):
        missing = sorted(set(range(indices[-1] + 1)) - set(indices))
        raise DataError(f"frame sequence has gaps, missing indices {missing[:8]}")
    arrays = []
    shape = None
    for i in indices:
        try:
            with Image.open(found[i]) as im:
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
                a = np.asarray(im, dtype=np.float64) / 255.0
        except (OSError, SyntaxError) as e:
            raise DataError(f"cannot read {found[i]}: {e}") from e
        if a.ndim == 2:
            a = a[:, :, None]
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise DataError(
                f"frame {i} has shape {a.shape[:2]}, expected {shape[:2]} (mixed resolutions)"
            )
        arrays.append(a)
    return VideoVolume(frames=np.stack(arrays, axis=0))


def save_frames(video: VideoVolume | np.ndarray, directory: str | Path) -> None:
    """Write a video as 8-bit PNG frames named frame_%05d.png.

    Values are clamped to [0, 1] and quantized by round(v * 255); each file is
    written to a temp name and renamed so partial writes never leave a torn frame.
    """
    frames = video.frames if isinstance(video, VideoVolume) else np.asarray(video)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = np.clip(frames, 0.0, 1.0)
    data = np.rint(data * 255.0).astype(np.uint8)
    for i, frame in enumerate(data):
        if frame.shape[-1] == 1:
            im = Image.fromarray(frame[:, :, 0], mode="L")
        else:
            im = Image.fromarray(frame, mode="RGB")
        target = directory / f"frame_{i:05d}.png"
        tmp = directory / f".frame_{i:05d}.png.tmp"
        im.save(tmp, format="PNG")
        tmp.replace(target)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; returns +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
