"""Multi-resolution hash-grid encoding of (x, y, t) coordinates.

Each level overlays a virtual 3-D grid of corner vertices on the unit cube;
a coordinate is encoded by trilinear interpolation of learned feature vectors
stored at the 8 surrounding corners.  Coarse levels fit in dense tables,
finer ones share rows through a spatial hash.  A cosine ramp gates levels on
one by one (coarse to fine) as training progresses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError

# Per-axis multipliers of the spatial hash (x is left unmixed on purpose).
_PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)


@dataclass(frozen=True)
class HashGridConfig:
    """Geometry and capacity of the encoding."""

    n_levels: int = 8
    base_resolution: int = 4      # grid vertices per axis at level 0
    growth: float = 1.45
    features: int = 2             # feature dims per level
    table_size: int = 2 ** 14     # max rows per level
    init_scale: float = 1e-4

    def __post_init__(self):
        if self.n_levels < 1 or self.base_resolution < 2:
            raise DataError("encoding needs n_levels >= 1 and base_resolution >= 2")

    @property
    def out_dim(self) -> int:
        return self.n_levels * self.features

    def level_resolution(self, n: int) -> int:
        return int(np.floor(self.base_resolution * self.growth ** n))

    def is_dense(self, n: int) -> bool:
        r = self.level_resolution(n)
        return r ** 3 <= self.table_size

    def level_rows(self, n: int) -> int:
        return min(self.level_resolution(n) ** 3, self.table_size)


def hash_index(cfg: HashGridConfig, level: int, cells: np.ndarray) -> np.ndarray:
    """Map integer corner coordinates (..., 3) to table rows for one level.

    Dense levels use the row-major index x + y*R + z*R^2; hashed levels XOR
    the coordinates multiplied by fixed primes, modulo the table size.
    """
    cells = np.asarray(cells, dtype=np.int64)
    r = cfg.level_resolution(level)
    if cfg.is_dense(level):
        return cells[..., 0] + cells[..., 1] * r + cells[..., 2] * r * r
    u = cells.astype(np.uint64)
    h = (u[..., 0] * _PRIMES[0]) ^ (u[..., 1] * _PRIMES[1]) ^ (u[..., 2] * _PRIMES[2])
    return (h % np.uint64(cfg.table_size)).astype(np.int64)


def init_tables(cfg: HashGridConfig, rng: np.random.Generator, dtype=np.float32) -> list[np.ndarray]:
    """Uniform +/- init_scale feature tables, one per level."""
    return [
        rng.uniform(-cfg.init_scale, cfg.init_scale,
                    size=(cfg.level_rows(n), cfg.features)).astype(dtype)
        for n in range(cfg.n_levels)
    ]


# The 8 corner offsets of a cell, in (x, y, z) order.
_CORNERS = np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)],
                    dtype=np.int64)


def encode_prepare(cfg: HashGridConfig, coords: np.ndarray,
                   dtype=np.float32) -> list[tuple[np.ndarray, np.ndarray]]:
    """Precompute (rows, weights) per level for a (B, 3) coordinate batch.

    Coordinates are clamped to [0, 1].  The result depends only on coords and
    the grid geometry, so callers cache it per coordinate set.
    """
    coords = np.clip(np.asarray(coords, dtype=np.float64), 0.0, 1.0)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise DataError(f"coords must be (B, 3), got {coords.shape}")
    out = []
    for n in range(cfg.n_levels):
        r = cfg.level_resolution(n)
        pos = coords * (r - 1)
        cell = np.minimum(np.floor(pos).astype(np.int64), r - 2)
        frac = pos - cell
        corners = cell[:, None, :] + _CORNERS[None, :, :]        # (B, 8, 3)
        rows = hash_index(cfg, n, corners)                        # (B, 8)
        d = np.where(_CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        weights = d.prod(axis=2).astype(dtype)                    # (B, 8)
        out.append((rows, weights))
    return out


def anneal_weight(n: int, alpha: float) -> float:
    """Cosine gate for level n at progress alpha: 0 until alpha=n, 1 from alpha=n+1."""
    return float((1.0 - np.cos(np.pi * np.clip(alpha - n, 0.0, 1.0))) / 2.0)


def progress(iteration: int, n_levels: int, anneal_steps: int) -> float:
    """Annealing progress alpha = N * k / s (uncapped; the per-level clamp saturates it)."""
    if anneal_steps <= 0:
        raise DataError("anneal_steps must be positive")
    return n_levels * iteration / anneal_steps


def encode_apply(tables: list, prepared: list, alpha: float, dtype=np.float32):
    """Assemble the (B, n_levels * features) embedding from prepared lookups.

    `tables` entries may be Tensors (training) or ndarrays (evaluation).
    Levels whose anneal weight is exactly zero contribute zero vectors and
    receive no gradient.
    """
    parts = []
    b = prepared[0][0].shape[0]
    for n, (rows, weights) in enumerate(prepared):
        w = anneal_weight(n, alpha)
        table = tables[n]
        feat_dim = table.value.shape[1] if ad.is_tensor(table) else table.shape[1]
        if w == 0.0:
            parts.append(np.zeros((b, feat_dim), dtype=dtype))
            continue
        feat = ad.gather_interp(table, rows, weights)
        parts.append(feat * np.asarray(w, dtype=dtype) if w != 1.0 else feat)
    return ad.concat(parts, axis=1)


def encode(cfg: HashGridConfig, tables: list, coords: np.ndarray, alpha: float):
    """Convenience wrapper: prepare + apply in one call."""
    return encode_apply(tables, encode_prepare(cfg, coords), alpha)
