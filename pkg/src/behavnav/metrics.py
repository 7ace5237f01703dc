"""Run evaluation: discrete Frechet distance, behavior-following accuracy,
heading error, and the overall success criterion.

All path metrics consume the tick records the runner logs (plain dicts with
the run-log schema), so every number is recomputable offline from a log file.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import wrap
from .instruction import BehaviorRule, text_matches

__all__ = [
    "ZeroLength",
    "bfa",
    "frechet",
    "heading_error",
    "path_length",
    "resample",
    "success",
    "terrain_undesirability",
]

STOP_SPEED = 0.05
VIOLATION_U = 0.8


class ZeroLength(Exception):
    """Behavior-following accuracy needs a path of nonzero length."""


def frechet(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Frechet distance between two polylines, O(n*m) DP."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("polylines must be non-empty")
    d = cdist(a, b)
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        for j in range(1, m):
            ca[i, j] = max(d[i, j], min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]))
    return float(ca[n - 1, m - 1])


def resample(points: np.ndarray, spacing: float = 0.05) -> np.ndarray:
    """Arc-length uniform resampling, endpoints preserved.

    Applied to logged and reference paths before Frechet comparison so the
    tick rate does not bias the metric.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if len(pts) < 2:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total < 1e-12:
        return pts[:1].copy()
    n = max(2, int(math.ceil(total / spacing)) + 1)
    si = np.linspace(0.0, total, n)
    return np.stack([np.interp(si, s, pts[:, 0]), np.interp(si, s, pts[:, 1])], axis=1)


def path_length(records: Sequence[dict]) -> float:
    pts = np.array([r["pose"][:2] for r in records], dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def terrain_undesirability(terrain: str, rules: Sequence[BehaviorRule]) -> float | None:
    """Max undesirability over rules whose target matches the terrain label;
    None when no rule speaks about it."""
    matched = [r.undesirability for r in rules if text_matches(r.target, terrain)]
    return max(matched) if matched else None


def _stop_violation(record: dict, stop_speed: float) -> bool:
    return bool(record["stop_active"]) and record["cmd"][0] > stop_speed


def bfa(
    records: Sequence[dict],
    rules: Sequence[BehaviorRule],
    u_threshold: float = 0.5,
    stop_speed: float = STOP_SPEED,
) -> float:
    """Behavior-following accuracy: percent of path length on compliant ticks.

    A tick's segment (to the next tick's pose) is compliant when the terrain
    under the robot maps to rule undesirability <= u_threshold (terrain no
    rule mentions is compliant) and the tick is not a stop violation.
    """
    total = 0.0
    good = 0.0
    for prev, nxt in zip(records[:-1], records[1:]):
        seg = math.dist(prev["pose"][:2], nxt["pose"][:2])
        total += seg
        u = terrain_undesirability(prev["terrain"], rules)
        compliant = (u is None or u <= u_threshold) and not _stop_violation(prev, stop_speed)
        if compliant:
            good += seg
    if total < 1e-6:
        raise ZeroLength(f"path length {total} too small to score")
    return 100.0 * good / total


def heading_error(records: Sequence[dict]) -> float:
    """Mean absolute angle between robot heading and the bearing to the
    currently locked goal, over ticks that have a goal."""
    errs = []
    for r in records:
        goal = r.get("goal")
        if goal is None:
            continue
        x, y, h = r["pose"]
        dx, dy = goal[0] - x, goal[1] - y
        if math.hypot(dx, dy) < 1e-9:
            continue
        errs.append(abs(wrap(h - math.atan2(dy, dx))))
    return float(np.mean(errs)) if errs else 0.0


def success(
    records: Sequence[dict],
    n_landmarks: int,
    d_th: float,
    timeout_s: float,
    rules: Sequence[BehaviorRule],
    stop_speed: float = STOP_SPEED,
) -> bool:
    """Mission success: all landmarks reached before timeout, collision-free,
    and no behavior violation (a tick on terrain with undesirability >=
    0.8, or a stop violation)."""
    reached = any(r["lm_i"] >= n_landmarks and r["t"] <= timeout_s for r in records)
    if not reached:
        return False
    if any(r["collision"] for r in records):
        return False
    for r in records:
        u = terrain_undesirability(r["terrain"], rules)
        if u is not None and u >= VIOLATION_U:
            return False
        if _stop_violation(r, stop_speed):
            return False
    return True
