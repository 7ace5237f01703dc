"""Planar poses, egocentric goal coordinates, and the camera ground model.

Coordinate conventions used throughout the package:

* Odom/world frame: right-handed, x-y ground plane, heading measured
  counter-clockwise from +x, radians.
* Robot frame: +x forward, +y left, +z up, origin at the robot center on the
  ground.
* Camera: pinhole, mounted at (mount_offset, 0, mount_height) in the robot
  frame and pitched down by mount_pitch about the robot y axis. Optical frame
  is x right, y down, z forward (so a pixel row below the principal point
  looks at ground closer to the robot).
* Pixels: u is the column (right), v is the row (down), continuous
  coordinates; integer coordinates are pixel centers. A pixel is in view when
  0 <= u <= width-1 and 0 <= v <= height-1.
* Angles returned by wrap() live in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "AboveHorizon",
    "CameraModel",
    "EgocentricGoal",
    "FrameTransform",
    "OutOfView",
    "Pose2D",
    "ground_to_pixel",
    "pixel_ray",
    "pixel_to_ground",
    "project_points",
    "project_points_clamped",
    "pixel_ray_grid",
    "to_egocentric",
    "wrap",
]


class OutOfView(Exception):
    """Point projects behind the camera or outside the image."""


class AboveHorizon(Exception):
    """Pixel ray never intersects the ground plane."""


def wrap(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "heading", wrap(self.heading))


@dataclass(frozen=True)
class EgocentricGoal:
    """Target seen from the robot: range r, and the target-heading (theta) and
    robot-heading (delta) offsets from the robot-to-target bearing."""

    r: float
    theta: float
    delta: float


def to_egocentric(robot: Pose2D, target: Pose2D) -> EgocentricGoal:
    """Express a target pose in egocentric (r, theta, delta) coordinates.

    bearing is the odom-frame direction from robot to target;
    delta = robot.heading - bearing, theta = target.heading - bearing, both
    wrapped into (-pi, pi]. Below 1e-9 m range the bearing is undefined and
    both angles are zeroed.
    """
    dx = target.x - robot.x
    dy = target.y - robot.y
    r = math.hypot(dx, dy)
    if r < 1e-9:
        return EgocentricGoal(r, 0.0, 0.0)
    bearing = math.atan2(dy, dx)
    return EgocentricGoal(r, wrap(target.heading - bearing), wrap(robot.heading - bearing))


@dataclass(frozen=True)
class FrameTransform:
    """SE(2) transform taking points from `source` frame to `target` frame."""

    rotation: float
    translation: tuple[float, float]
    source: str
    target: str

    def apply(self, point: tuple[float, float]) -> tuple[float, float]:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = point
        return (
            c * x - s * y + self.translation[0],
            s * x + c * y + self.translation[1],
        )

    def compose(self, inner: "FrameTransform") -> "FrameTransform":
        """Transform equivalent to applying `inner` first, then self."""
        if inner.target != self.source:
            raise ValueError(f"frame mismatch: {inner.target!r} -> {self.source!r}")
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = inner.translation
        return FrameTransform(
            rotation=wrap(self.rotation + inner.rotation),
            translation=(
                c * tx - s * ty + self.translation[0],
                s * tx + c * ty + self.translation[1],
            ),
            source=inner.source,
            target=self.target,
        )

    def inverse(self) -> "FrameTransform":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return FrameTransform(
            rotation=wrap(-self.rotation),
            translation=(-(c * tx + s * ty), -(-s * tx + c * ty)),
            source=self.target,
            target=self.source,
        )


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the ground-plane mounting of the camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    mount_height: float
    mount_pitch: float
    mount_offset: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.mount_height <= 0:
            raise ValueError("camera must sit above the ground plane")


def _camera_axes(pitch: float):
    # Optical axes expressed in the robot frame (x fwd, y left, z up).
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = (cp, 0.0, -sp)
    right = (0.0, -1.0, 0.0)
    down = (-sp, 0.0, -cp)
    return right, down, forward


def ground_to_pixel(cam: CameraModel, robot: Pose2D, point: tuple[float, float]) -> tuple[float, float]:
    """Project an odom-frame ground point into the image.

    Raises OutOfView when the point is behind the image plane or lands
    outside the pixel grid.
    """
    c, s = math.cos(robot.heading), math.sin(robot.heading)
    dx, dy = point[0] - robot.x, point[1] - robot.y
    # robot frame, relative to the camera origin
    px = c * dx + s * dy - cam.mount_offset
    py = -s * dx + c * dy
    pz = -cam.mount_height
    right, down, forward = _camera_axes(cam.mount_pitch)
    x_cam = right[0] * px + right[1] * py + right[2] * pz
    y_cam = down[0] * px + down[1] * py + down[2] * pz
    z_cam = forward[0] * px + forward[1] * py + forward[2] * pz
    if z_cam <= 1e-9:
        raise OutOfView("point behind the camera")
    u = cam.fx * x_cam / z_cam + cam.cx
    v = cam.fy * y_cam / z_cam + cam.cy
    if not (0.0 <= u <= cam.width - 1 and 0.0 <= v <= cam.height - 1):
        raise OutOfView(f"pixel ({u:.1f}, {v:.1f}) outside image")
    return u, v


def pixel_ray(cam: CameraModel, pixel: tuple[float, float]) -> tuple[float, float, float]:
    """Ray direction of a pixel in the robot frame (not normalized)."""
    u, v = pixel
    dx_c = (u - cam.cx) / cam.fx
    dy_c = (v - cam.cy) / cam.fy
    right, down, forward = _camera_axes(cam.mount_pitch)
    return (
        dx_c * right[0] + dy_c * down[0] + forward[0],
        dx_c * right[1] + dy_c * down[1] + forward[1],
        dx_c * right[2] + dy_c * down[2] + forward[2],
    )


def pixel_to_ground(cam: CameraModel, robot: Pose2D, pixel: tuple[float, float]) -> tuple[float, float]:
    """Intersect a pixel ray with the ground plane, odom frame.

    Raises AboveHorizon when the ray does not descend toward the ground.
    """
    u, v = pixel
    rx, ry, rz = pixel_ray(cam, pixel)
    if rz >= -1e-9:
        raise AboveHorizon(f"pixel ({u:.1f}, {v:.1f}) looks at or above the horizon")
    t = cam.mount_height / -rz
    gx_r = cam.mount_offset + t * rx
    gy_r = t * ry
    c, s = math.cos(robot.heading), math.sin(robot.heading)
    return (robot.x + c * gx_r - s * gy_r, robot.y + s * gx_r + c * gy_r)


def project_points(cam: CameraModel, robot: Pose2D, xs: np.ndarray, ys: np.ndarray):
    """Vectorized ground_to_pixel without exceptions.

    Returns (u, v, in_view); u/v are only meaningful where in_view is True.
    """
    c, s = math.cos(robot.heading), math.sin(robot.heading)
    dx = xs - robot.x
    dy = ys - robot.y
    px = c * dx + s * dy - cam.mount_offset
    py = -s * dx + c * dy
    pz = -cam.mount_height
    right, down, forward = _camera_axes(cam.mount_pitch)
    x_cam = right[0] * px + right[1] * py + right[2] * pz
    y_cam = down[0] * px + down[1] * py + down[2] * pz
    z_cam = forward[0] * px + forward[1] * py + forward[2] * pz
    valid = z_cam > 1e-9
    z_safe = np.where(valid, z_cam, 1.0)
    u = cam.fx * x_cam / z_safe + cam.cx
    v = cam.fy * y_cam / z_safe + cam.cy
    in_view = valid & (u >= 0.0) & (u <= cam.width - 1) & (v >= 0.0) & (v <= cam.height - 1)
    return u, v, in_view


def project_points_clamped(cam: CameraModel, robot: Pose2D, xs: np.ndarray, ys: np.ndarray):
    """Like project_points, but pixels are clamped into the image bounds.

    Returns (u, v, front); front marks points ahead of the image plane.
    Points in front of the camera but outside the frustum read the nearest
    image pixel, so edge-of-view cost lookups stay conservative instead of
    silently dropping to zero.
    """
    c, s = math.cos(robot.heading), math.sin(robot.heading)
    dx = xs - robot.x
    dy = ys - robot.y
    px = c * dx + s * dy - cam.mount_offset
    py = -s * dx + c * dy
    pz = -cam.mount_height
    right, down, forward = _camera_axes(cam.mount_pitch)
    x_cam = right[0] * px + right[1] * py + right[2] * pz
    y_cam = down[0] * px + down[1] * py + down[2] * pz
    z_cam = forward[0] * px + forward[1] * py + forward[2] * pz
    front = z_cam > 1e-9
    z_safe = np.where(front, z_cam, 1.0)
    u = np.clip(cam.fx * x_cam / z_safe + cam.cx, 0.0, cam.width - 1.0)
    v = np.clip(cam.fy * y_cam / z_safe + cam.cy, 0.0, cam.height - 1.0)
    return u, v, front


@lru_cache(maxsize=8)
def pixel_ray_grid(cam: CameraModel):
    """Per-pixel ray directions in the robot frame, cached per camera.

    Returns (rx, ry, rz) arrays of shape (height, width) for integer pixel
    centers. Directions are not normalized; only the ground intersection
    ratio matters.
    """
    u = np.arange(cam.width, dtype=np.float64)
    v = np.arange(cam.height, dtype=np.float64)
    dx_c = (u[None, :] - cam.cx) / cam.fx
    dy_c = (v[:, None] - cam.cy) / cam.fy
    right, down, forward = _camera_axes(cam.mount_pitch)
    rx = dx_c * right[0] + dy_c * down[0] + forward[0]
    ry = dx_c * right[1] + dy_c * down[1] + forward[1]
    rz = dx_c * right[2] + dy_c * down[2] + forward[2]
    return rx, ry, rz
