"""Temporal consistency for frame-by-frame enhanced video.

A coordinate field (multi-resolution hash encoding + MLP) is fit to an
enhanced video under a wavelet-domain consistency objective: trajectory
flicker is detected where the temporal high band is strong but the spatial
high bands are weak, and suppressed there while detail and content are
anchored elsewhere.  Submodules are imported lazily so that the CLI can pin
thread counts before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("autodiff", "cli", "core", "encoding", "errors", "flow", "nn",
               "pipeline", "prior", "vcwave", "wavelet")

_EXPORTS = {
    "VideoVolume": ("core", "VideoVolume"),
    "load_frames": ("core", "load_frames"),
    "save_frames": ("core", "save_frames"),
    "psnr": ("core", "psnr"),
    "FitConfig": ("pipeline", "FitConfig"),
    "fit": ("pipeline", "fit"),
    "render": ("pipeline", "render"),
    "synth_benchmark": ("pipeline", "synth_benchmark"),
    "flicker_energy": ("pipeline", "flicker_energy"),
    "warping_error": ("pipeline", "warping_error"),
    "FlowField": ("flow", "FlowField"),
    "estimate_flow_hs": ("flow", "estimate_flow_hs"),
    "read_flo": ("flow", "read_flo"),
    "write_flo": ("flow", "write_flo"),
    "FilterParams": ("prior", "FilterParams"),
    "filter_video": ("prior", "filter_video"),
    "WaterwaveError": ("errors", "WaterwaveError"),
    "DataError": ("errors", "DataError"),
    "NumericalError": ("errors", "NumericalError"),
}

__all__ = ["__version__", *(_SUBMODULES), *(_EXPORTS)]


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        mod, attr = _EXPORTS[name]
        return getattr(importlib.import_module(f".{mod}", __name__), attr)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
