"""End-to-end training, rendering, benchmark synthesis, and metrics.

``fit`` trains a coordinate field (hash encoding -> MLP -> color) so that it
reproduces the enhanced video where it is trustworthy while suppressing
trajectory flicker where the inconsistency mask fires; ``render`` samples the
trained field on an arbitrary space-time grid.  ``synth_benchmark`` builds a
fully analytic scene (known flows, known clean reference) for evaluation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoding, nn, vcwave
from .core import VideoVolume, normalized_coords
from .errors import DataError, NumericalError
from .flow import (FlowField, estimate_flow_hs, estimate_transmission,
                   rectify_flow, tfr_coords, transmission_guidance, warp)

CHECKPOINT_MAGIC = b"WWF1"
CHECKPOINT_VERSION = 1

LOG_HEADER = "iteration,loss_tc,loss_detail,loss_basic,total,alpha,lr"


@dataclass(frozen=True)
class FitConfig:
    """Everything the training loop needs; JSON-serializable for the CLI."""

    iterations: int = 5000
    lr: float = 1e-3
    lr_break: int | None = None        # default: 3/4 of iterations, then lr/10
    anneal_steps: int | None = None    # default: iterations / 2
    lambda_tc: float = 1.0
    lambda_detail: float = 1.0
    lambda_basic: float = 1.0
    lambda_rec: float = 0.0            # optional plain |F - V| anchor, off by default
    basic_mode: str = "complement"
    window: int = 4
    resolution_cap: int = 128
    refresh_every: int = 500
    beta0: float = 1e-3
    beta1: float = 1e-2
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    grid: encoding.HashGridConfig = field(default_factory=encoding.HashGridConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")
        if self.lr <= 0:
            raise DataError("lr must be positive")
        if self.window < 2 or self.window % 2:
            raise DataError("window must be an even frame count >= 2")
        if self.refresh_every < 1:
            raise DataError("refresh_every must be >= 1")
        if self.resolution_cap < 8:
            raise DataError("resolution_cap must be >= 8")
        if self.basic_mode not in ("complement", "mask"):
            raise DataError(f"unknown basic-loss mode {self.basic_mode!r}")

    def resolved_break(self) -> int:
        return self.lr_break if self.lr_break is not None else (3 * self.iterations) // 4

    def resolved_anneal(self) -> int:
        if self.anneal_steps is not None:
            return self.anneal_steps
        return max(self.iterations // 2, 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "FitConfig":
        data = dict(data)
        grid_data = data.pop("grid", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        grid_known = {f for f in encoding.HashGridConfig.__dataclass_fields__}
        grid_unknown = set(grid_data) - grid_known
        if grid_unknown:
            raise DataError(f"unknown grid config keys: {sorted(grid_unknown)}")
        if "hidden" in data:
            data["hidden"] = tuple(int(h) for h in data["hidden"])
        return cls(grid=encoding.HashGridConfig(**grid_data), **data)


@dataclass
class FieldCheckpoint:
    """A trained field: config, training-video shape, and all parameter segments."""

    config: FitConfig
    video_shape: tuple[int, int, int, int]
    iteration: int
    params: dict[str, np.ndarray]


def save_checkpoint(ckpt: FieldCheckpoint, path: str | Path) -> None:
    """Binary layout: magic, u32 version, length-prefixed canonical JSON header,
    then named little-endian float32 segments.  Written atomically."""
    header = {
        "config": ckpt.config.to_dict(),
        "video_shape": list(ckpt.video_shape),
        "iteration": ckpt.iteration,
        "segments": [[k, list(v.shape)] for k, v in ckpt.params.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for name, value in ckpt.params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<II", len(nb), value.size))
            f.write(nb)
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> FieldCheckpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"corrupt checkpoint {path}: bad magic")
    version, blob_len = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    if len(raw) < 12 + blob_len:
        raise DataError(f"corrupt checkpoint {path}: truncated header")
    try:
        header = json.loads(raw[12: 12 + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"corrupt checkpoint {path}: bad header ({e})") from e
    offset = 12 + blob_len
    params = {}
    for name, shape in header["segments"]:
        if len(raw) < offset + 8:
            raise DataError(f"corrupt checkpoint {path}: truncated segment table")
        name_len, count = struct.unpack("<II", raw[offset: offset + 8])
        offset += 8 + name_len
        end = offset + 4 * count
        if len(raw) < end:
            raise DataError(f"corrupt checkpoint {path}: truncated segment {name!r}")
        vec = np.frombuffer(raw[offset:end], dtype="<f4")
        if int(np.prod(shape)) != count:
            raise DataError(f"corrupt checkpoint {path}: segment {name!r} size mismatch")
        params[name] = vec.reshape(shape).copy()
        offset = end
    config = FitConfig.from_dict(header["config"])
    return FieldCheckpoint(config=config, video_shape=tuple(header["video_shape"]),
                           iteration=int(header["iteration"]), params=params)


def _box_downsample(frames: np.ndarray, factor: int) -> np.ndarray:
    t, h, w, c = frames.shape
    h2, w2 = h - h % factor, w - w % factor
    x = frames[:, :h2, :w2]
    x = x.reshape(t, h2 // factor, factor, w2 // factor, factor, c)
    return x.mean(axis=(2, 4))


def _color_spec(cfg: FitConfig, channels: int) -> nn.MlpSpec:
    return nn.MlpSpec(in_dim=cfg.grid.out_dim, hidden=cfg.hidden,
                      out_dim=channels, final="sigmoid")


def _tfr_spec(cfg: FitConfig) -> nn.MlpSpec:
    return nn.MlpSpec(in_dim=cfg.grid.out_dim + 4, hidden=cfg.hidden,
                      out_dim=2, final="linear")


def _build_store(cfg: FitConfig, channels: int, rng: np.random.Generator) -> nn.ParamStore:
    store = nn.ParamStore()
    for n, table in enumerate(encoding.init_tables(cfg.grid, rng)):
        store.add(f"hash/l{n}", table)
    nn.init_mlp(store, "color", _color_spec(cfg, channels), rng)
    nn.init_mlp(store, "tfr", _tfr_spec(cfg), rng, zero_last=True)
    return store


def _tables(store: nn.ParamStore, cfg: FitConfig) -> list:
    return [store[f"hash/l{n}"] for n in range(cfg.grid.n_levels)]


class _FitState:
    """Per-video caches shared across iterations (flows, guidance, V bands)."""

    def __init__(self, cfg: FitConfig, video: VideoVolume, guide: VideoVolume,
                 external_flows: list[FlowField] | None):
        self.cfg = cfg
        self.video = video
        # float32 copy for the V-side decomposition so training stays in float32
        self.frames32 = video.frames.astype(np.float32)
        t, h, w, c = video.shape
        self.shape = (t, h, w)
        if t < 2:
            raise DataError("fitting needs at least 2 frames")
        self.window = min(cfg.window, t - (t % 2))
        if self.window < 2:
            raise DataError("fitting needs a window of at least 2 frames")
        if external_flows is not None:
            if len(external_flows) != t - 1:
                raise DataError(f"need {t - 1} pair flows, got {len(external_flows)}")
            for fl in external_flows:
                if fl.vectors.shape[:2] != (h, w):
                    raise DataError("external flow resolution does not match the video")
            self.base_flows = external_flows
        else:
            gf = guide.frames
            self.base_flows = [estimate_flow_hs(gf[j + 1], gf[j]) for j in range(t - 1)]
        trans = [estimate_transmission(fr).values for fr in guide.frames]
        self.sigma = [transmission_guidance(trans[j], trans[j + 1], self.base_flows[j])
                      for j in range(t - 1)]
        self.tfr_prepared = [
            encoding.encode_prepare(cfg.grid, tfr_coords(self.base_flows[j], j, self.shape))
            for j in range(t - 1)
        ]
        self.window_prepared: dict[int, list] = {}
        self.v_temporal: dict[int, tuple] = {}

    def window_starts(self) -> np.ndarray:
        t = self.shape[0]
        return np.arange(0, t - self.window + 1, 2, dtype=np.int64)

    def prepared_for(self, t0: int) -> list:
        if t0 not in self.window_prepared:
            t, h, w = self.shape
            grid = normalized_coords((t0, t0 + self.window), t, h, w)
            self.window_prepared[t0] = encoding.encode_prepare(
                self.cfg.grid, grid.coords.reshape(-1, 3))
        return self.window_prepared[t0]

    def v_bands_and_mask(self, t0: int, rect_values: list[np.ndarray], version: int):
        """Aligned-V bands and mask, recomputed when the cache version advances."""
        cached = self.v_temporal.get(t0)
        if cached is not None and cached[0] == version:
            return cached[1], cached[2]
        flows = [FlowField(v, source="rectified") for v in rect_values]
        bands = vcwave.decompose_stack(self.frames32[t0: t0 + self.window],
                                       flows, (t0, t0 + self.window))
        mask = vcwave.inconsistency_mask(bands, self.cfg.beta0, self.cfg.beta1)
        self.v_temporal[t0] = (version, bands, mask)
        return bands, mask


def fit(enhanced: VideoVolume, original: VideoVolume | None = None,
        external_flows: list[FlowField] | None = None,
        config: FitConfig = FitConfig()) -> tuple[FieldCheckpoint, list[str]]:
    """Train the field on an enhanced video; returns (checkpoint, log rows).

    ``original`` (the raw un-enhanced footage), when given, drives flow and
    transmission estimation; the enhanced frames are used otherwise.  External
    flows must be in tracking orientation (flows[j]: frame j -> frame j+1).
    The log rows are CSV lines matching LOG_HEADER.
    """
    cfg = config
    video = enhanced
    factor = int(np.ceil(max(video.shape[1], video.shape[2]) / cfg.resolution_cap))
    if factor > 1:
        video = VideoVolume(_box_downsample(video.frames, factor), video.frame_rate)
        if original is not None:
            original = VideoVolume(_box_downsample(original.frames, factor),
                                   original.frame_rate)
        if external_flows is not None:
            raise DataError("external flows cannot be used above the resolution cap")
    guide = original if original is not None else video
    if guide.shape[:3] != video.shape[:3]:
        raise DataError("original and enhanced videos must share (T, H, W)")
    t_len, h, w, c = video.shape
    rng = np.random.default_rng(cfg.seed)
    store = _build_store(cfg, c, rng)
    state = _FitState(cfg, video, guide, external_flows)
    tables = _tables(store, cfg)
    color_spec = _color_spec(cfg, c)
    tfr_spec = _tfr_spec(cfg)
    adam = nn.AdamState()
    anneal = cfg.resolved_anneal()
    breakpoint_ = cfg.resolved_break()
    starts = state.window_starts()
    log = [LOG_HEADER]
    snapshot = store.values_dict()
    snapshot_iter = 0
    wlen = state.window

    for k in range(cfg.iterations):
        alpha = encoding.progress(k, cfg.grid.n_levels, anneal)
        # The final quarter runs at lr/10: with L1 losses the steady-state
        # parameter ringing scales with lr, and that ringing shows up as
        # spatial roughness that can close the mask's smoothness gate.
        lr = cfg.lr if k < breakpoint_ else cfg.lr / 10.0
        t0 = int(starts[rng.integers(len(starts))])
        window = (t0, t0 + wlen)
        pair_idx = range(t0, t0 + wlen - 1)
        rect = [rectify_flow(state.base_flows[j], state.tfr_prepared[j],
                             state.sigma[j], tables, store, tfr_spec, alpha)
                for j in pair_idx]
        emb = encoding.encode_apply(tables, state.prepared_for(t0), alpha)
        rgb = nn.mlp_forward(store, "color", color_spec, emb)
        f_window = ad.reshape(rgb, (wlen, h, w, c))
        bands_f = vcwave.decompose_stack(f_window, rect, window)
        version = k // max(cfg.refresh_every, 1)
        bands_v, mask_v = state.v_bands_and_mask(
            t0, [np.asarray(r.value, dtype=np.float32) for r in rect], version)
        mask_f = vcwave.inconsistency_mask(bands_f, cfg.beta0, cfg.beta1)
        l_tc = vcwave.loss_tc(mask_f, bands_f)
        l_detail = vcwave.loss_detail(bands_f, bands_v)
        l_basic = vcwave.loss_basic(bands_f, bands_v, mask_v, cfg.basic_mode)
        total = cfg.lambda_tc * l_tc + cfg.lambda_detail * l_detail \
            + cfg.lambda_basic * l_basic
        if cfg.lambda_rec > 0:
            v_win = video.frames[t0: t0 + wlen].astype(np.float32)
            total = total + cfg.lambda_rec * ad.vmean(ad.absval(f_window - v_win))
        total_value = float(total.value)
        if not np.isfinite(total_value):
            store.load_values(snapshot)
            err = NumericalError(
                f"non-finite loss at iteration {k}; keeping iteration {snapshot_iter}")
            err.checkpoint = FieldCheckpoint(config=cfg, video_shape=(t_len, h, w, c),
                                             iteration=snapshot_iter,
                                             params=store.values_dict())
            raise err
        snapshot = store.values_dict()
        snapshot_iter = k
        store.zero_grad()
        ad.backward(total)
        nn.adam_step(store, adam, lr)
        log.append(f"{k},{float(l_tc.value):.9g},{float(l_detail.value):.9g},"
                   f"{float(l_basic.value):.9g},{total_value:.9g},{alpha:.9g},{lr:.9g}")

    ckpt = FieldCheckpoint(config=cfg, video_shape=(t_len, h, w, c),
                           iteration=cfg.iterations, params=store.values_dict())
    return ckpt, log


def render(ckpt: FieldCheckpoint, frames: int | None = None, scale: int = 1,
           chunk: int = 65536) -> VideoVolume:
    """Sample the trained field on a (frames, scale*H, scale*W) grid.

    ``frames=None`` keeps the training frame count; time coordinates span
    [0, 1] evenly, so 2x temporal density (frames = 2T - 1) lands exactly on
    the original coordinates at even indices.
    """
    t_len, h, w, c = ckpt.video_shape
    t_out = frames if frames is not None else t_len
    if t_out < 1 or scale < 1:
        raise DataError("render needs frames >= 1 and scale >= 1")
    cfg = ckpt.config
    store = nn.ParamStore()
    for name, value in ckpt.params.items():
        store.add(name, value)
    tables = _tables(store, cfg)
    spec = _color_spec(cfg, c)
    alpha = encoding.progress(ckpt.iteration, cfg.grid.n_levels, cfg.resolved_anneal())
    h_out, w_out = h * scale, w * scale
    grid = normalized_coords((0, t_out), t_out, h_out, w_out)
    coords = grid.coords.reshape(-1, 3)
    out = np.empty((coords.shape[0], c), dtype=np.float64)
    for lo in range(0, coords.shape[0], chunk):
        part = coords[lo: lo + chunk]
        emb = encoding.encode_apply(tables, encoding.encode_prepare(cfg.grid, part), alpha)
        rgb = nn.mlp_forward(store, "color", spec, emb)
        out[lo: lo + chunk] = rgb.value
    return VideoVolume(np.clip(out.reshape(t_out, h_out, w_out, c), 0.0, 1.0))


def rectified_flows(ckpt: FieldCheckpoint, base_flows: list[FlowField],
                    guide: VideoVolume) -> list[FlowField]:
    """Evaluate the trained flow rectifier on every consecutive pair."""
    t_len, h, w, c = ckpt.video_shape
    if len(base_flows) != t_len - 1:
        raise DataError(f"need {t_len - 1} base flows, got {len(base_flows)}")
    cfg = ckpt.config
    store = nn.ParamStore()
    for name, value in ckpt.params.items():
        store.add(name, value)
    tables = _tables(store, cfg)
    spec = _tfr_spec(cfg)
    alpha = encoding.progress(ckpt.iteration, cfg.grid.n_levels, cfg.resolved_anneal())
    trans = [estimate_transmission(fr).values for fr in guide.frames]
    out = []
    for j, base in enumerate(base_flows):
        sigma = transmission_guidance(trans[j], trans[j + 1], base)
        prepared = encoding.encode_prepare(cfg.grid, tfr_coords(base, j, (t_len, h, w)))
        rect = rectify_flow(base, prepared, sigma, tables, store, spec, alpha)
        out.append(FlowField(np.asarray(rect.value, dtype=np.float32), source="rectified"))
    return out


# ---------------------------------------------------------------------------
# Synthetic benchmark


@dataclass(frozen=True)
class SynthConfig:
    """Analytic scene parameters: drifting background plus translating discs."""

    frames: int = 16
    height: int = 64
    width: int = 64
    discs: int = 3
    flicker: float = 0.1      # per-frame gain jitter sigma (gamma/WB jitter at half)
    motion: float = 1.0       # global motion amplitude in px/frame
    seed: int = 0


@dataclass
class SynthResult:
    clean: VideoVolume
    degraded: VideoVolume
    flickered: VideoVolume
    flows_tracking: list[FlowField]   # flows_tracking[t]: frame t -> t+1 positions
    flows_backward: list[FlowField]   # flows_backward[t]: warp frame t onto grid t+1
    transmission: np.ndarray
    config: SynthConfig


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class _Scene:
    """Analytic scene: evaluated exactly at any time, no resampling error."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        h, w, k = cfg.height, cfg.width, cfg.discs
        self.bg_drift = cfg.motion * np.array([0.27, 0.16])
        self.bg_base = np.array([0.42, 0.47, 0.40])
        self.bg_grad = rng.uniform(-1.0, 1.0, size=(3, 2))
        self.bg_grad *= 0.10 / max(np.abs(self.bg_grad).sum(axis=1).max(), 1e-9)
        self.bg_waves = []
        # Keep the background decisively smooth: its aggregated spatial
        # detail must sit well below the mask threshold beta1, or the
        # flicker gate closes on the very regions it is meant to flag.
        # The first wave is a bit finer and stronger than the rest so that a
        # misaligned warp of the background leaves a clear temporal-band
        # trace (the signal flow rectification learns from) while the
        # spatial aggregate still stays under the threshold.
        for freq_scale, amp_scale in ((1.7, 1.8), (1.0, 1.0), (1.0, 1.0)):
            freq = freq_scale * rng.uniform(0.5, 1.6, size=2) / min(h, w)
            phase = rng.uniform(0, 2 * np.pi, size=3)
            amp = amp_scale * rng.uniform(0.004, 0.015, size=3)
            self.bg_waves.append((freq, phase, amp))
        radius_lo, radius_hi = min(h, w) / 13.0, min(h, w) / 9.0
        self.discs = []
        # Relax margins (then, as a last resort, the disc count) so that small
        # frames still yield a deterministic scene instead of failing.
        margin, gap = max(2.0, min(h, w) / 16.0), 3.0
        tries = 0
        while len(self.discs) < k:
            tries += 1
            if tries % 400 == 0:
                if margin > 0.5:
                    margin, gap = margin / 2.0, gap / 2.0
                elif k > 1:
                    k -= 1
                else:
                    break
            r = rng.uniform(radius_lo, radius_hi)
            v = cfg.motion * rng.uniform(0.4, 1.0) * _unit(rng)
            span = (cfg.frames - 1) * v
            lo = np.maximum(r + margin, r + margin - np.minimum(span, 0))
            hi = np.minimum(np.array([w, h]) - r - margin,
                            np.array([w, h]) - r - margin - np.maximum(span, 0))
            if np.any(hi <= lo):
                continue
            c0 = rng.uniform(lo, hi)
            cand = {"r": r, "v": v, "c0": c0,
                    "color": rng.uniform(0.25, 0.75, size=3),
                    "tex_period": rng.uniform(4.0, 7.0, size=2),
                    "tex_phase": rng.uniform(0, 2 * np.pi, size=2)}
            if all(self._paths_clear(cand, d, gap) for d in self.discs):
                self.discs.append(cand)

    def _paths_clear(self, a: dict, b: dict, gap: float) -> bool:
        ts = np.arange(self.cfg.frames)[:, None]
        pa = a["c0"][None, :] + ts * a["v"][None, :]
        pb = b["c0"][None, :] + ts * b["v"][None, :]
        return bool(np.all(np.linalg.norm(pa - pb, axis=1) - (a["r"] + b["r"]) > gap))

    def clean_frame(self, t: int) -> np.ndarray:
        h, w = self.cfg.height, self.cfg.width
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
        bx = xs - self.bg_drift[0] * t
        by = ys - self.bg_drift[1] * t
        frame = np.empty((h, w, 3))
        for ch in range(3):
            val = self.bg_base[ch] + self.bg_grad[ch, 0] * bx / w + self.bg_grad[ch, 1] * by / h
            for freq, phase, amp in self.bg_waves:
                val = val + amp[ch] * np.cos(2 * np.pi * (freq[0] * bx + freq[1] * by)
                                             + phase[ch])
            frame[:, :, ch] = val
        for d in self.discs:
            cx, cy = d["c0"] + t * d["v"]
            dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
            cover = _smoothstep((d["r"] - dist) / 1.5)
            qx, qy = xs - cx, ys - cy
            tex = 0.5 + 0.22 * (np.sin(2 * np.pi * qx / d["tex_period"][0] + d["tex_phase"][0])
                                * np.sin(2 * np.pi * qy / d["tex_period"][1] + d["tex_phase"][1]))
            disc_rgb = np.clip(d["color"][None, None, :] * (0.55 + 0.9 * tex[:, :, None]),
                               0.05, 0.95)
            frame = (1 - cover[:, :, None]) * frame + cover[:, :, None] * disc_rgb
        return np.clip(frame, 0.02, 0.98)

    def velocity_field(self, t: int) -> np.ndarray:
        """Per-pixel motion (px/frame) of whichever object owns each pixel at time t."""
        h, w = self.cfg.height, self.cfg.width
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
        vel = np.broadcast_to(self.bg_drift, (h, w, 2)).copy()
        for d in self.discs:
            cx, cy = d["c0"] + t * d["v"]
            inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= d["r"] ** 2
            vel[inside] = d["v"]
        return vel


def _unit(rng: np.random.Generator) -> np.ndarray:
    ang = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(ang), np.sin(ang)])


def synth_benchmark(cfg: SynthConfig = SynthConfig(), seed: int | None = None) -> SynthResult:
    """Generate the analytic benchmark: clean scene, degraded input, flickered video.

    Degradation follows the scattering model I = J*T + A*(1 - T) with a fixed
    depth-ramp transmission and airlight (0.3, 0.5, 0.7).  The flickered video
    is the idealized per-frame inversion of I (which recovers J exactly)
    corrupted by i.i.d. per-frame gain, gamma, and white-balance jitter; at
    flicker = 0 it equals the clean scene bit for bit.
    """
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    rng = np.random.default_rng(cfg.seed)
    scene = _Scene(cfg, rng)
    t_len, h, w = cfg.frames, cfg.height, cfg.width
    clean = np.stack([scene.clean_frame(t) for t in range(t_len)])
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    trans = np.clip(0.92 - 0.5 * ys / max(h - 1, 1) - 0.08 * xs / max(w - 1, 1), 0.1, 1.0)
    airlight = np.array([0.3, 0.5, 0.7])
    degraded = clean * trans[:, :, None] + airlight * (1.0 - trans[:, :, None])
    sig = cfg.flicker
    flickered = clean.copy()
    if sig > 0:
        for t in range(t_len):
            gain = max(1.0 + sig * rng.standard_normal(), 0.05)
            gamma = float(np.clip(1.0 + 0.5 * sig * rng.standard_normal(), 0.5, 2.0))
            wb = np.maximum(1.0 + 0.5 * sig * rng.standard_normal(3), 0.05)
            flickered[t] = np.clip((clean[t] ** gamma) * gain * wb, 0.0, 1.0)
    tracking, backward = [], []
    for t in range(t_len - 1):
        tracking.append(FlowField(scene.velocity_field(t).astype(np.float32),
                                  source="synthetic"))
        backward.append(FlowField((-scene.velocity_field(t + 1)).astype(np.float32),
                                  source="synthetic"))
    return SynthResult(
        clean=VideoVolume(clean), degraded=VideoVolume(np.clip(degraded, 0, 1)),
        flickered=VideoVolume(flickered), flows_tracking=tracking,
        flows_backward=backward, transmission=trans, config=cfg)


# ---------------------------------------------------------------------------
# Metrics


def warping_error(video: VideoVolume, flows_backward: list[FlowField]) -> float:
    """Mean L1 between each frame and its motion-warped predecessor.

    ``flows_backward[t-1]`` carries frame t-1 onto frame t's grid.  Pixels
    whose warp leaves the frame are excluded; a pair with no valid pixels is
    an error.
    """
    frames = video.frames
    if len(flows_backward) != len(frames) - 1:
        raise DataError(f"need {len(frames) - 1} flows, got {len(flows_backward)}")
    errs = []
    for t in range(1, len(frames)):
        warped, valid = warp(frames[t - 1], flows_backward[t - 1])
        if not valid.any():
            raise NumericalError(f"warping error undefined: no valid pixels at pair {t - 1}")
        diff = np.abs(frames[t] - warped)[valid]
        errs.append(float(diff.mean()))
    return float(np.mean(errs))


def flicker_energy(video: VideoVolume) -> float:
    """Variance over time of the frame-mean intensity after linear detrending.

    Slow trends (drift, fades) are removed by the line fit; frame-to-frame
    exposure jitter survives and is what this measures.
    """
    means = video.frames.mean(axis=(1, 2, 3))
    t = np.arange(len(means), dtype=np.float64)
    if len(means) < 3:
        return 0.0
    coeffs = np.polyfit(t, means, 1)
    residual = means - np.polyval(coeffs, t)
    return float(np.mean(residual ** 2))


def temporal_profile(video: VideoVolume, row: int) -> np.ndarray:
    """Stack one scanline over time into a (T, W, C) image (flicker shows as banding)."""
    t, h, w, c = video.shape
    if not (0 <= row < h):
        raise DataError(f"row {row} outside height {h}")
    return video.frames[:, row, :, :].copy()


def endpoint_error(flows: list[FlowField], reference: list[FlowField]) -> float:
    """Mean Euclidean distance between corresponding flow vectors."""
    if len(flows) != len(reference):
        raise DataError("flow lists differ in length")
    dists = [np.linalg.norm(f.vectors.astype(np.float64)
                            - r.vectors.astype(np.float64), axis=-1).mean()
             for f, r in zip(flows, reference)]
    return float(np.mean(dists))
