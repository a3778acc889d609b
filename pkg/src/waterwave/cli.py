"""Command-line surface: fit / render / baseline / synth / metrics / flow / profile.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The environment variable WATERWAVE_THREADS caps BLAS/OpenMP parallelism
(0 or unset leaves the libraries on automatic); it is applied before numpy
is imported, which is why the heavy imports here live inside the handlers.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

from .errors import DataError, NumericalError

log = logging.getLogger("waterwave")


def _apply_thread_env() -> None:
    n = os.environ.get("WATERWAVE_THREADS", "").strip()
    if n and n != "0":
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
            os.environ[var] = n


_apply_thread_env()


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _sig6(value):
    """Round floats to 6 significant digits for the metrics report."""
    if isinstance(value, dict):
        return {k: _sig6(v) for k, v in value.items()}
    if isinstance(value, float):
        if not math.isfinite(value):
            return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
        return float(f"{value:.6g}")
    return value


def _load_flows(directory: str | Path, count: int) -> list:
    from .flow import read_flo
    directory = Path(directory)
    flows = []
    for i in range(count):
        p = directory / f"flow_{i:05d}.flo"
        if not p.exists():
            raise DataError(f"missing flow file {p}")
        flows.append(read_flo(p))
    return flows


def _backward_flows(video) -> list:
    from .flow import estimate_flow_hs
    f = video.frames
    return [estimate_flow_hs(f[i], f[i + 1]) for i in range(len(f) - 1)]


# --- subcommand handlers ---


def cmd_fit(args) -> int:
    from . import pipeline
    from .core import load_frames

    enhanced = load_frames(args.enhanced)
    original = load_frames(args.input) if args.input else None
    flows = None
    if args.flow_dir:
        flows = _load_flows(args.flow_dir, len(enhanced) - 1)
    cfg_data = {}
    if args.config:
        try:
            cfg_data = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise DataError(f"cannot read config {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"invalid config JSON: {e}") from e
        if not isinstance(cfg_data, dict):
            raise DataError("config file must hold a JSON object")
    cfg = pipeline.FitConfig.from_dict(cfg_data)
    overrides = {name: getattr(args, name) for name in
                 ("iterations", "seed", "window", "lr", "resolution_cap",
                  "lambda_rec", "basic_mode")
                 if getattr(args, name) is not None}
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    try:
        ckpt, rows = pipeline.fit(enhanced, original, flows, cfg)
    except NumericalError as e:
        rescue = getattr(e, "checkpoint", None)
        if rescue is not None:
            pipeline.save_checkpoint(rescue, args.out)
            print(f"training aborted; last finite state saved to {args.out}",
                  file=sys.stderr)
        raise
    pipeline.save_checkpoint(ckpt, args.out)
    if args.log:
        _atomic_text(args.log, "\n".join(rows) + "\n")
    print(f"fitted field saved to {args.out}")
    return 0


def cmd_render(args) -> int:
    from . import pipeline
    from .core import save_frames

    ckpt = pipeline.load_checkpoint(args.ckpt)
    video = pipeline.render(ckpt, frames=args.frames, scale=args.scale)
    save_frames(video, args.out)
    print(f"rendered {video.shape[0]} frames to {args.out}")
    return 0


def cmd_baseline(args) -> int:
    from .core import load_frames, save_frames
    from .prior import FilterParams, filter_video

    video = load_frames(args.enhanced)
    if args.flow_dir:
        flows = _load_flows(args.flow_dir, len(video) - 1)
    elif args.auto_flow:
        flows = _backward_flows(video)
    else:
        flows = None  # zero-motion filtering
    filtered = filter_video(video, flows, FilterParams(weight=args.w))
    save_frames(filtered, args.out)
    print(f"filtered {video.shape[0]} frames to {args.out}")
    return 0


def cmd_synth(args) -> int:
    from . import pipeline
    from .core import save_frames
    from .flow import write_flo

    cfg = pipeline.SynthConfig(frames=args.frames, height=args.size, width=args.size,
                               discs=args.discs, flicker=args.flicker,
                               motion=args.motion, seed=args.seed)
    result = pipeline.synth_benchmark(cfg)
    out = Path(args.out)
    save_frames(result.clean, out / "clean")
    save_frames(result.degraded, out / "degraded")
    save_frames(result.flickered, out / "flickered")
    for sub, flows in (("flows_backward", result.flows_backward),
                       ("flows_tracking", result.flows_tracking)):
        d = out / sub
        d.mkdir(parents=True, exist_ok=True)
        for i, fl in enumerate(flows):
            write_flo(fl, d / f"flow_{i:05d}.flo")
    _atomic_text(out / "meta.json",
                 json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n")
    print(f"synthetic benchmark written to {out}")
    return 0


def cmd_metrics(args) -> int:
    from . import pipeline
    from .core import load_frames, psnr

    video = load_frames(args.video)
    report: dict = {"flicker_energy": pipeline.flicker_energy(video)}
    if len(video) >= 2:
        if args.flow_dir:
            flows = _load_flows(args.flow_dir, len(video) - 1)
        else:
            flows = _backward_flows(video)
        report["warping_error"] = pipeline.warping_error(video, flows)
    if args.ref:
        ref = load_frames(args.ref)
        if ref.shape != video.shape:
            raise DataError(f"reference shape {ref.shape} != video shape {video.shape}")
        report["psnr"] = psnr(video.frames, ref.frames)
    text = json.dumps(_sig6(report), indent=2, sort_keys=True)
    if args.report:
        _atomic_text(args.report, text + "\n")
        print(f"metrics written to {args.report}")
    else:
        print(text)
    return 0


def cmd_flow(args) -> int:
    from .core import load_frames
    from .flow import estimate_flow_hs, write_flo

    video = load_frames(args.input)
    f = video.frames
    if len(f) < 2:
        raise DataError("flow estimation needs at least 2 frames")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(f) - 1):
        if args.tracking:
            fl = estimate_flow_hs(f[i + 1], f[i], smoothness=args.smoothness,
                                  iterations=args.iterations)
        else:
            fl = estimate_flow_hs(f[i], f[i + 1], smoothness=args.smoothness,
                                  iterations=args.iterations)
        write_flo(fl, out / f"flow_{i:05d}.flo")
    print(f"wrote {len(f) - 1} flow fields to {out}")
    return 0


def cmd_profile(args) -> int:
    import numpy as np
    from PIL import Image

    from . import pipeline
    from .core import load_frames

    video = load_frames(args.video)
    img = pipeline.temporal_profile(video, args.row)
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if data.shape[-1] == 1:
        data = data[:, :, 0]
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    Image.fromarray(data).save(tmp, format="PNG")
    tmp.replace(path)
    print(f"temporal profile saved to {path}")
    return 0


# --- parser ---


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="waterwave",
                     description="Temporal consistency for frame-wise enhanced video.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="Train a field on an enhanced frame sequence")
    p.add_argument("--enhanced", required=True, help="Directory of enhanced frames")
    p.add_argument("--input", default=None,
                   help="Directory of original (pre-enhancement) frames for flow "
                        "and transmission guidance")
    p.add_argument("--flow-dir", default=None,
                   help="Directory of pair flows flow_%%05d.flo in tracking "
                        "orientation (frame t grid -> frame t+1), as written by "
                        "`flow --tracking`")
    p.add_argument("--config", default=None, help="JSON config file (FitConfig keys)")
    p.add_argument("--out", required=True, help="Output checkpoint path")
    p.add_argument("--log", default=None, help="Optional training-log CSV path")
    p.add_argument("--iterations", type=int, default=None, help="Override: iterations")
    p.add_argument("--seed", type=int, default=None, help="Override: RNG seed")
    p.add_argument("--window", type=int, default=None, help="Override: frame window")
    p.add_argument("--lr", type=float, default=None, help="Override: learning rate")
    p.add_argument("--resolution-cap", type=int, default=None,
                   help="Override: max training resolution")
    p.add_argument("--lambda-rec", type=float, default=None,
                   help="Override: plain reconstruction weight")
    p.add_argument("--basic-mode", choices=["complement", "mask"], default=None,
                   help="Override: low-band loss weighting mode")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="Sample a trained field to frames")
    p.add_argument("--ckpt", required=True, help="Checkpoint path")
    p.add_argument("--out", required=True, help="Output frame directory")
    p.add_argument("--frames", type=int, default=None,
                   help="Frame count (default: training count)")
    p.add_argument("--scale", type=int, default=1, help="Spatial upsampling factor")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("baseline", help="Closed-form consistency filter")
    p.add_argument("--enhanced", required=True, help="Directory of enhanced frames")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--flow-dir", default=None,
                   help="Directory of backward pair flows flow_%%05d.flo")
    g.add_argument("--auto-flow", action="store_true",
                   help="Estimate backward flows internally")
    p.add_argument("--w", type=float, default=1.0, help="Blend weight")
    p.add_argument("--out", required=True, help="Output frame directory")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="Generate the analytic flicker benchmark")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--frames", type=int, default=16, help="Frame count")
    p.add_argument("--size", type=int, default=64, help="Square frame size in px")
    p.add_argument("--flicker", type=float, default=0.1, help="Per-frame gain sigma")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--discs", type=int, default=3, help="Number of moving discs")
    p.add_argument("--motion", type=float, default=1.0, help="Motion scale in px/frame")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", help="Consistency / fidelity metrics report")
    p.add_argument("--video", required=True, help="Directory of frames to score")
    p.add_argument("--ref", default=None, help="Reference frames for PSNR")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--flow-dir", default=None,
                   help="Directory of backward pair flows for the warping error")
    g.add_argument("--auto-flow", action="store_true",
                   help="Estimate backward flows internally (the default)")
    p.add_argument("--report", default=None,
                   help="Write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("flow", help="Estimate pair flows and write .flo files")
    p.add_argument("--input", required=True, help="Directory of frames")
    p.add_argument("--out", required=True, help="Output directory for flow_%%05d.flo")
    p.add_argument("--tracking", action="store_true",
                   help="Tracking orientation (frame t grid -> t+1) instead of "
                        "backward (frame t+1 grid -> t)")
    p.add_argument("--smoothness", type=float, default=0.1, help="Smoothness weight")
    p.add_argument("--iterations", type=int, default=100, help="Solver iterations")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("profile", help="Stack one image row over time into a PNG")
    p.add_argument("--video", required=True, help="Directory of frames")
    p.add_argument("--row", type=int, required=True, help="Row index to track")
    p.add_argument("--out", required=True, help="Output PNG path")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
