"""Behavioral cost maps: per-target segmentation rasters scaled by rule
undesirability and fused by pointwise maximum.

Rasters are numpy float64 arrays of shape (height, width), row-major, values
in [0, 1]. Pixel (u, v) = column u, row v; integer coordinates are pixel
centers, matching geometry's convention.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "CostMap",
    "DimensionMismatch",
    "SegmentationBackend",
    "SegmentationMap",
    "fuse",
    "load_raw",
    "max_cost",
    "sample",
    "sample_many",
    "save_pgm",
    "save_raw",
    "target_cost",
    "zero_cost_map",
]


class DimensionMismatch(Exception):
    """Rasters in one operation must share (height, width)."""


def _as_raster(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("raster must be 2-D (height, width)")
    return arr


@dataclass
class SegmentationMap:
    """Per-label segmentation probabilities for one camera frame."""

    label: str
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_raster(self.values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class CostMap:
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_raster(self.values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


class SegmentationBackend(Protocol):
    """Produces one segmentation raster per query label for a sensor frame."""

    def segment(self, frame, labels: Sequence[str]) -> list[SegmentationMap]: ...


def zero_cost_map(width: int, height: int) -> CostMap:
    return CostMap(np.zeros((height, width)))


def target_cost(seg: SegmentationMap, desirability: float, mode: str = "undesirability") -> CostMap:
    """Cost contribution of one behavioral rule.

    mode "undesirability" (default) scales by 1 - desirability, so regions to
    seek score low and regions to shun score high; mode "desirability" scales
    by the raw desirability instead.
    """
    if not 0.0 <= desirability <= 1.0:
        raise ValueError(f"desirability {desirability} outside [0, 1]")
    if mode == "undesirability":
        mult = 1.0 - desirability
    elif mode == "desirability":
        mult = desirability
    else:
        raise ValueError(f"unknown cost multiplier mode {mode!r}")
    return CostMap(mult * seg.values)


def fuse(maps: Sequence[CostMap]) -> CostMap:
    """Pointwise maximum over per-rule cost maps."""
    if not maps:
        raise ValueError("fuse needs at least one cost map")
    shape = maps[0].values.shape
    for m in maps[1:]:
        if m.values.shape != shape:
            raise DimensionMismatch(f"{m.values.shape} vs {shape}")
    if len(maps) == 1:
        return CostMap(maps[0].values.copy())
    return CostMap(np.maximum.reduce([m.values for m in maps]))


def max_cost(cm: CostMap) -> float:
    return float(cm.values.max())


def sample(cm: CostMap, pixel: tuple[float, float]) -> float:
    """Bilinear lookup at a continuous pixel; 0 outside the grid."""
    u, v = pixel
    h, w = cm.values.shape
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        return 0.0
    u0 = int(u)
    v0 = int(v)
    u1 = min(u0 + 1, w - 1)
    v1 = min(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    g = cm.values
    top = (1.0 - fu) * g[v0, u0] + fu * g[v0, u1]
    bot = (1.0 - fu) * g[v1, u0] + fu * g[v1, u1]
    return float((1.0 - fv) * top + fv * bot)


def sample_many(cm: CostMap, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized bilinear lookup; 0 outside the grid."""
    h, w = cm.values.shape
    inside = (u >= 0.0) & (u <= w - 1) & (v >= 0.0) & (v <= h - 1)
    uc = np.clip(u, 0.0, w - 1)
    vc = np.clip(v, 0.0, h - 1)
    u0 = uc.astype(np.intp)
    v0 = vc.astype(np.intp)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = uc - u0
    fv = vc - v0
    g = cm.values
    top = (1.0 - fu) * g[v0, u0] + fu * g[v0, u1]
    bot = (1.0 - fu) * g[v1, u0] + fu * g[v1, u1]
    out = (1.0 - fv) * top + fv * bot
    return np.where(inside, out, 0.0)


def save_pgm(cm: CostMap, path) -> None:
    """Write a binary PGM (P5, maxval 255); cost 1.0 maps to 255."""
    h, w = cm.values.shape
    data = np.rint(np.clip(cm.values, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def save_raw(cm: CostMap, path) -> None:
    """Write width and height as uint32 little-endian, then float32 LE values."""
    h, w = cm.values.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", w, h))
        f.write(cm.values.astype("<f4").tobytes())


def load_raw(path) -> CostMap:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise ValueError("raw cost map header truncated")
        w, h = struct.unpack("<II", header)
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h:
        raise ValueError(f"raw cost map payload has {data.size} values, expected {w * h}")
    return CostMap(data.reshape(h, w).astype(np.float64))
