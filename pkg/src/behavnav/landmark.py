"""Landmark detection, pixel-to-odom goal conversion, and the goal lock.

Detections are pixel coordinates of the current navigation landmark in the
camera frame. A pixel at or above the horizon cannot be grounded, so it
becomes a bearing-only goal a default range along the ray azimuth. The goal
lock keeps the latest odom goal per landmark, ignores stale detections, and
advances through L_nav as the robot arrives.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from . import gateway
from .geometry import (
    AboveHorizon,
    CameraModel,
    OutOfView,
    Pose2D,
    ground_to_pixel,
    pixel_ray,
    pixel_to_ground,
)
from .instruction import LengthMismatch, PromptSet, render_prompt, text_matches
from .simulator import LabelImage, World

__all__ = [
    "GoalLock",
    "HttpLandmarkBackend",
    "LandmarkBackend",
    "OdomGoal",
    "OracleLandmarkBackend",
    "PixelGoal",
    "build_landmark_request",
    "eval_fscore",
    "eval_pixel_error",
    "pixel_goal_to_odom",
    "update_goal_lock",
]


@dataclass(frozen=True)
class PixelGoal:
    u: float
    v: float
    landmark_index: int
    t: float


@dataclass(frozen=True)
class OdomGoal:
    x: float
    y: float
    landmark_index: int
    t: float
    bearing_only: bool = False


@dataclass(frozen=True)
class GoalLock:
    """Current odom goal (None until first detection) and mission progress."""

    current: OdomGoal | None = None
    landmark_index: int = 0
    reached_threshold: float = 0.5


class LandmarkBackend(Protocol):
    def detect(
        self, image: LabelImage, robot: Pose2D, t: float, landmark_index: int, landmark_text: str
    ) -> PixelGoal | None: ...


class OracleLandmarkBackend:
    """Projects the true landmark position, optionally with pixel noise.

    Matches the queried text against world landmark names by normalized
    substring. Noise is Gaussian per axis from a seeded generator; noisy
    pixels are clipped back into the image. Returns None (not found) when no
    landmark matches or the point is out of view.
    """

    def __init__(self, world: World, cam: CameraModel, noise_sigma: float = 0.0, seed: int = 0):
        self.world = world
        self.cam = cam
        self.noise_sigma = noise_sigma
        self.rng = np.random.default_rng(seed)

    def detect(
        self, image: LabelImage, robot: Pose2D, t: float, landmark_index: int, landmark_text: str
    ) -> PixelGoal | None:
        target = None
        for lm in self.world.landmarks:
            if text_matches(lm.text, landmark_text):
                target = lm
                break
        if target is None:
            return None
        try:
            u, v = ground_to_pixel(self.cam, robot, target.position)
        except OutOfView:
            return None
        if self.noise_sigma > 0.0:
            du, dv = self.rng.normal(0.0, self.noise_sigma, size=2)
            u = float(np.clip(u + du, 0.0, self.cam.width - 1))
            v = float(np.clip(v + dv, 0.0, self.cam.height - 1))
        return PixelGoal(u=u, v=v, landmark_index=landmark_index, t=t)


def build_landmark_request(image: LabelImage, landmark_text: str, prompts: PromptSet) -> dict:
    h, w = image.ids.shape
    return {
        "schema": "landmark",
        "prompt": render_prompt(prompts.frontier_prompt, landmark=landmark_text, width=str(w), height=str(h)),
        "landmark": landmark_text,
        "width": w,
        "height": h,
        "labels": list(image.labels),
        "image_b64": base64.b64encode(image.ids.astype("<i2").tobytes()).decode("ascii"),
    }


class HttpLandmarkBackend:
    """Vision-language detection through the gateway (live/record/replay)."""

    def __init__(self, client: gateway.GatewayClient, prompts: PromptSet):
        self.client = client
        self.prompts = prompts

    def detect(
        self, image: LabelImage, robot: Pose2D, t: float, landmark_index: int, landmark_text: str
    ) -> PixelGoal | None:
        response = self.client.call(build_landmark_request(image, landmark_text, self.prompts))
        parsed = gateway.validate(response, "landmark")
        if parsed is None:
            return None
        h, w = image.ids.shape
        u = float(np.clip(parsed[0], 0.0, w - 1))
        v = float(np.clip(parsed[1], 0.0, h - 1))
        return PixelGoal(u=u, v=v, landmark_index=landmark_index, t=t)


def pixel_goal_to_odom(
    pixel: PixelGoal, robot: Pose2D, cam: CameraModel, default_range: float = 10.0
) -> OdomGoal:
    """Ground the pixel; above the horizon, fall back to a bearing-only goal
    default_range meters along the pixel ray's azimuth."""
    try:
        x, y = pixel_to_ground(cam, robot, (pixel.u, pixel.v))
        return OdomGoal(x=x, y=y, landmark_index=pixel.landmark_index, t=pixel.t)
    except AboveHorizon:
        rx, ry, _ = pixel_ray(cam, (pixel.u, pixel.v))
        az = robot.heading + math.atan2(ry, rx)
        return OdomGoal(
            x=robot.x + default_range * math.cos(az),
            y=robot.y + default_range * math.sin(az),
            landmark_index=pixel.landmark_index,
            t=pixel.t,
            bearing_only=True,
        )


def update_goal_lock(lock: GoalLock, detection: OdomGoal | None, robot: Pose2D) -> GoalLock:
    """Fold one detection result (or None for not-found) into the lock.

    A fresh detection for the current landmark replaces the goal; not-found
    keeps the previous goal; detections for another landmark index are stale
    and dropped. Arriving within reached_threshold advances the landmark and
    clears the goal.
    """
    current = lock.current
    if detection is not None and detection.landmark_index == lock.landmark_index:
        current = detection
    index = lock.landmark_index
    if current is not None:
        if math.hypot(robot.x - current.x, robot.y - current.y) < lock.reached_threshold:
            index += 1
            current = None
    return replace(lock, current=current, landmark_index=index)


def eval_pixel_error(
    predictions: Sequence[PixelGoal | None], truths: Sequence[PixelGoal | None]
) -> float:
    """Mean Euclidean pixel error over frames where both sides detected."""
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    errs = [
        math.hypot(p.u - t.u, p.v - t.v)
        for p, t in zip(predictions, truths)
        if p is not None and t is not None
    ]
    return float(np.mean(errs)) if errs else 0.0


def eval_fscore(
    predictions: Sequence[PixelGoal | None],
    gt_regions: Sequence[tuple[float, float, float, float] | None],
) -> float:
    """Detection F-score against ground-truth pixel rectangles.

    Per frame: a prediction inside its (u_min, v_min, u_max, v_max) region is
    a TP; a prediction outside the region, or any prediction when no region
    exists, is an FP; not-found with a region present is an FN. F = 2PR/(P+R),
    0 when P+R == 0.
    """
    if len(predictions) != len(gt_regions):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gt_regions)} regions")
    tp = fp = fn = 0
    for p, reg in zip(predictions, gt_regions):
        if p is None and reg is None:
            continue
        if p is None:
            fn += 1
        elif reg is None:
            fp += 1
        elif reg[0] <= p.u <= reg[2] and reg[1] <= p.v <= reg[3]:
            tp += 1
        else:
            fp += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
