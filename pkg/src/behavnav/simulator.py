"""Deterministic desk-scale 2D world and sensors.

The world is a set of labeled terrain polygons with draw order, circle and
polygon obstacles, scripted point actors with ground footprints, and named
landmarks. Sensors are a ground-plane label camera (every pixel ray is
intersected with z=0 and labeled; rays at or above the horizon read "sky")
and a planar lidar. Terrain is camera-visible but lidar-invisible; obstacles
and actor footprints show up in both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import Point, Polygon

from .costmap import SegmentationMap
from .geometry import CameraModel, Pose2D, pixel_ray_grid
from .instruction import text_matches

__all__ = [
    "CircleObstacle",
    "LabelImage",
    "Landmark",
    "PolygonObstacle",
    "RobotState",
    "ScriptedActor",
    "SensorFrame",
    "TerrainRegion",
    "World",
    "actors_update",
    "collision",
    "label_table",
    "lidar_scan",
    "oracle_segment",
    "render_label_image",
    "step",
    "terrain_label_at",
]

SKY_LABEL = "sky"


def _poly_array(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    return arr


@dataclass
class TerrainRegion:
    """Labeled ground polygon; higher draw order wins overlaps."""

    label: str
    polygon: np.ndarray
    order: int = 0
    geom: Polygon = field(init=False, repr=False)

    def __post_init__(self):
        self.polygon = _poly_array(self.polygon)
        self.geom = Polygon(self.polygon)
        if not self.geom.is_valid:
            raise ValueError(f"terrain polygon {self.label!r} is not a simple polygon")


@dataclass
class CircleObstacle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass
class PolygonObstacle:
    points: np.ndarray
    geom: Polygon = field(init=False, repr=False)

    def __post_init__(self):
        self.points = _poly_array(self.points)
        self.geom = Polygon(self.points)
        if not self.geom.is_valid:
            raise ValueError("obstacle polygon is not a simple polygon")


@dataclass
class ScriptedActor:
    """Point actor following timed waypoints with a circular ground footprint.

    `position`/`active` are resolved snapshots filled in by actors_update;
    sensors and collision checks read the snapshots.
    """

    kind: str
    label: str
    times: np.ndarray
    points: np.ndarray
    footprint_radius: float = 0.3
    active_window: tuple[float, float] | None = None
    position: np.ndarray | None = None
    active: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.times.ndim != 1 or self.points.shape != (self.times.size, 2):
            raise ValueError("waypoints need matching times (M,) and points (M, 2)")
        if self.times.size < 1:
            raise ValueError("actor needs at least one waypoint")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("waypoint times must be non-decreasing")

    def position_at(self, t: float) -> np.ndarray:
        # np.interp clamps to the first/last waypoint outside the time span
        return np.array([
            np.interp(t, self.times, self.points[:, 0]),
            np.interp(t, self.times, self.points[:, 1]),
        ])

    def is_active(self, t: float) -> bool:
        if self.active_window is None:
            return True
        return self.active_window[0] <= t <= self.active_window[1]


@dataclass
class Landmark:
    text: str
    position: tuple[float, float]


@dataclass
class World:
    bounds: tuple[float, float, float, float]
    default_label: str = "ground"
    terrain: list[TerrainRegion] = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    actors: list[ScriptedActor] = field(default_factory=list)
    landmarks: list[Landmark] = field(default_factory=list)
    robot_radius: float = 0.3


@dataclass
class RobotState:
    pose: Pose2D
    v: float = 0.0
    omega: float = 0.0


@dataclass
class LabelImage:
    """Per-pixel label ids indexing into `labels`."""

    ids: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int16)


@dataclass
class SensorFrame:
    t: float
    label_image: LabelImage
    lidar: np.ndarray


def step(pose: Pose2D, v: float, omega: float, dt: float) -> Pose2D:
    """Advance the unicycle one step under held (v, omega); closed-form arc."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if abs(omega) < 1e-9:
        return Pose2D(
            pose.x + v * dt * math.cos(pose.heading),
            pose.y + v * dt * math.sin(pose.heading),
            pose.heading,
        )
    h2 = pose.heading + omega * dt
    radius = v / omega
    return Pose2D(
        pose.x + radius * (math.sin(h2) - math.sin(pose.heading)),
        pose.y + radius * (math.cos(pose.heading) - math.cos(h2)),
        h2,
    )


def actors_update(world: World, t: float) -> World:
    """World with every actor's position/active snapshot resolved at time t."""
    actors = [
        replace(a, position=a.position_at(t), active=a.is_active(t))
        for a in world.actors
    ]
    return replace(world, actors=actors)


def label_table(world: World) -> list[str]:
    """Stable label id assignment: sky, default terrain, regions, actors."""
    labels = [SKY_LABEL, world.default_label]
    for region in world.terrain:
        if region.label not in labels:
            labels.append(region.label)
    for actor in world.actors:
        if actor.label not in labels:
            labels.append(actor.label)
    return labels


def render_label_image(world: World, robot: Pose2D, cam: CameraModel, t: float) -> LabelImage:
    """Ground-plane raycast labeling of every pixel.

    Terrain polygons are painted in ascending draw order, then active actor
    footprints on top (actors occlude terrain). Pixels whose rays do not
    descend read "sky". Call actors_update first so actor snapshots match t.
    """
    labels = label_table(world)
    index = {name: i for i, name in enumerate(labels)}
    rx, ry, rz = pixel_ray_grid(cam)
    ground = rz < -1e-9
    tt = np.where(ground, cam.mount_height / np.where(ground, -rz, 1.0), 0.0)
    gx_r = cam.mount_offset + tt * rx
    gy_r = tt * ry
    c, s = math.cos(robot.heading), math.sin(robot.heading)
    gx = robot.x + c * gx_r - s * gy_r
    gy = robot.y + s * gx_r + c * gy_r

    ids = np.full(rx.shape, index[world.default_label], dtype=np.int16)
    for region in sorted(world.terrain, key=lambda r: r.order):
        mask = ground & shapely.intersects_xy(region.geom, gx, gy)
        ids[mask] = index[region.label]
    for actor in world.actors:
        if not actor.active or actor.position is None:
            continue
        ax, ay = actor.position
        mask = ground & ((gx - ax) ** 2 + (gy - ay) ** 2 <= actor.footprint_radius**2)
        ids[mask] = index[actor.label]
    ids[~ground] = index[SKY_LABEL]
    return LabelImage(ids=ids, labels=labels)


def oracle_segment(
    image: LabelImage,
    query_label: str,
    blur_sigma: float = 0.0,
    noise_amp: float = 0.0,
    seed: int = 0,
) -> SegmentationMap:
    """Ground-truth segmentation: hard mask of pixels whose label matches the
    query by normalized substring, Gaussian-blurred, plus seeded uniform
    noise, clamped to [0, 1]."""
    match_ids = [i for i, name in enumerate(image.labels) if text_matches(name, query_label)]
    mask = np.isin(image.ids, match_ids).astype(np.float64)
    if blur_sigma > 0.0:
        mask = ndimage.gaussian_filter(mask, sigma=blur_sigma, mode="nearest", truncate=4.0)
    if noise_amp > 0.0:
        rng = np.random.default_rng(seed)
        mask = mask + rng.uniform(-noise_amp, noise_amp, size=mask.shape)
    return SegmentationMap(label=query_label, values=np.clip(mask, 0.0, 1.0))


def _ray_circle_ranges(origin, dirs, center, radius):
    """Smallest non-negative hit parameter per ray, inf when missed."""
    m = np.asarray(center, dtype=np.float64) - origin
    b = dirs @ m
    c2 = float(m @ m) - radius * radius
    disc = b * b - c2
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t_near = b - root
    t_far = b + root
    t = np.where(t_near >= 0.0, t_near, np.where(t_far >= 0.0, np.maximum(t_near, 0.0), np.inf))
    return np.where(hit, t, np.inf)


def _ray_segment_ranges(origin, dirs, a, b):
    """Hit parameter per ray against segment ab, inf when missed."""
    e = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    ao = np.asarray(a, dtype=np.float64) - origin
    denom = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
    ok = np.abs(denom) > 1e-12
    denom_safe = np.where(ok, denom, 1.0)
    t = (ao[0] * e[1] - ao[1] * e[0]) / denom_safe
    u = (ao[0] * dirs[:, 1] - ao[1] * dirs[:, 0]) / denom_safe
    hit = ok & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def lidar_scan(
    world: World,
    robot: Pose2D,
    t: float,
    beams: int = 360,
    max_range: float = 10.0,
) -> np.ndarray:
    """Planar scan: evenly spaced azimuths over 2 pi, robot-frame hit points.

    Beams that hit nothing within max_range produce no return. Terrain is
    invisible; obstacles and active actor footprints reflect. Call
    actors_update first.
    """
    if beams < 1:
        raise ValueError("beams must be >= 1")
    az = 2.0 * math.pi * np.arange(beams) / beams
    dirs_world = np.stack(
        [np.cos(az + robot.heading), np.sin(az + robot.heading)], axis=1
    )
    origin = np.array([robot.x, robot.y])
    ranges = np.full(beams, np.inf)
    for obs in world.obstacles:
        if isinstance(obs, CircleObstacle):
            r = _ray_circle_ranges(origin, dirs_world, obs.center, obs.radius)
        else:
            r = np.full(beams, np.inf)
            pts = obs.points
            for i in range(len(pts)):
                r = np.minimum(r, _ray_segment_ranges(origin, dirs_world, pts[i], pts[(i + 1) % len(pts)]))
        ranges = np.minimum(ranges, r)
    for actor in world.actors:
        if not actor.active or actor.position is None:
            continue
        ranges = np.minimum(
            ranges, _ray_circle_ranges(origin, dirs_world, actor.position, actor.footprint_radius)
        )
    hits = ranges <= max_range
    # points in the robot frame: azimuth 0 is straight ahead
    return np.stack([ranges[hits] * np.cos(az[hits]), ranges[hits] * np.sin(az[hits])], axis=1)


def terrain_label_at(world: World, point: tuple[float, float]) -> str:
    """Terrain label under a ground point, honoring draw order."""
    label = world.default_label
    best_order = None
    for region in world.terrain:
        if best_order is not None and region.order < best_order:
            continue
        if shapely.intersects_xy(region.geom, point[0], point[1]):
            label = region.label
            best_order = region.order
    return label


def collision(world: World, robot: Pose2D) -> bool:
    """Robot center within robot_radius of any obstacle or active actor
    footprint. Call actors_update first."""
    p = Point(robot.x, robot.y)
    rr = world.robot_radius
    for obs in world.obstacles:
        if isinstance(obs, CircleObstacle):
            if math.hypot(robot.x - obs.center[0], robot.y - obs.center[1]) < obs.radius + rr:
                return True
        elif p.distance(obs.geom) < rr:
            return True
    for actor in world.actors:
        if actor.active and actor.position is not None:
            if math.hypot(robot.x - actor.position[0], robot.y - actor.position[1]) < actor.footprint_radius + rr:
                return True
    return False
