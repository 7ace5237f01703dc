"""Scenario files: strict JSON schema (version 1) describing one run.

Unknown fields are rejected with their path so typos fail fast. Auth tokens
never appear in scenario files; live backends read them from environment
variables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import gateway
from .geometry import CameraModel, Pose2D
from .planner import ParamBounds, PlannerConfig, TrajectoryParams
from .simulator import (
    CircleObstacle,
    Landmark,
    PolygonObstacle,
    ScriptedActor,
    TerrainRegion,
    World,
)

__all__ = ["InvalidScenario", "ScenarioConfig", "apply_overrides", "load_scenario", "shipped_scenario_path"]


class InvalidScenario(Exception):
    """Scenario file violates the schema; message carries the field path."""


def _check_keys(obj: dict, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    if not isinstance(obj, dict):
        raise InvalidScenario(f"{path}: expected an object")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise InvalidScenario(f"{path}.{key}: unknown field")
    for key in required:
        if key not in obj:
            raise InvalidScenario(f"{path}.{key}: missing")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidScenario(f"{path}: expected a number")
    if not math.isfinite(value):
        raise InvalidScenario(f"{path}: must be finite")
    return float(value)


def _point(value, path: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise InvalidScenario(f"{path}: expected [x, y]")
    return (_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))


def _points(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) < 1:
        raise InvalidScenario(f"{path}: expected a list of [x, y]")
    return np.array([_point(p, f"{path}[{i}]") for i, p in enumerate(value)])


@dataclass
class BackendsConfig:
    mode: str = "oracle"
    fallback: bool = True
    llm_url: str = ""
    vlm_url: str = ""
    llm_fixtures: str | None = None
    vlm_fixtures: str | None = None
    timeout_s: float = 10.0
    retries: int = 2
    simulate_latency: bool = False


@dataclass
class ScenarioConfig:
    name: str
    instruction: str
    world: World
    start: Pose2D
    camera: CameraModel
    planner: PlannerConfig
    bounds: ParamBounds
    timeout_s: float
    seeds: dict[str, int]
    backends: BackendsConfig
    desirability: dict[str, float] = field(default_factory=dict)
    cost_multiplier: str = "undesirability"
    blur_sigma: float = 0.0
    noise_amp: float = 0.0
    detect_period_s: float = 2.0
    landmark_noise_sigma: float = 0.0
    default_range: float = 10.0
    lidar_beams: int = 360
    lidar_max_range: float = 10.0
    reference_path: np.ndarray | None = None
    raw: dict = field(default_factory=dict)

    @property
    def config_digest(self) -> str:
        return gateway.digest(self.raw)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply --set key=value pairs; dotted keys descend into objects, and the
    value is parsed as JSON when possible, else kept as a string."""
    out = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise InvalidScenario(f"--set {item!r}: expected key=value")
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = parsed
    return out


def shipped_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (name without .json)."""
    return Path(str(resources.files("behavnav.scenarios") / f"{name}.json"))


def load_scenario(path, overrides: list[str] | None = None) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        shipped = shipped_scenario_path(str(path))
        if shipped.exists():
            p = shipped
        else:
            raise InvalidScenario(f"scenario file {path} not found")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"{p}: not valid JSON: {e}") from e
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_scenario(raw, name=p.stem)


def parse_scenario(raw: dict, name: str = "scenario") -> ScenarioConfig:
    _check_keys(
        raw,
        "$",
        required=("version", "instruction", "world", "start", "camera", "seeds", "timeout_s"),
        optional=(
            "name",
            "planner",
            "backends",
            "desirability",
            "cost_multiplier",
            "segmentation",
            "landmark",
            "lidar",
            "reference_path",
        ),
    )
    if raw["version"] != 1:
        raise InvalidScenario(f"$.version: unsupported version {raw['version']!r}")
    if not isinstance(raw["instruction"], str) or not raw["instruction"].strip():
        raise InvalidScenario("$.instruction: expected a non-empty string")

    world = _parse_world(raw["world"])

    start = raw["start"]
    if not isinstance(start, list) or len(start) != 3:
        raise InvalidScenario("$.start: expected [x, y, heading]")
    start_pose = Pose2D(*(
        _number(v, f"$.start[{i}]") for i, v in enumerate(start)
    ))

    cam = _parse_camera(raw["camera"])
    planner_cfg, bounds = _parse_planner(raw.get("planner", {}))

    seeds = raw["seeds"]
    _check_keys(seeds, "$.seeds", required=("sim", "optimizer", "noise"))
    for k in ("sim", "optimizer", "noise"):
        if isinstance(seeds[k], bool) or not isinstance(seeds[k], int):
            raise InvalidScenario(f"$.seeds.{k}: expected an integer")

    backends = _parse_backends(raw.get("backends", {}))

    desirability = raw.get("desirability", {})
    if not isinstance(desirability, dict):
        raise InvalidScenario("$.desirability: expected an object")
    desirability = {k: _number(v, f"$.desirability.{k}") for k, v in desirability.items()}
    for k, v in desirability.items():
        if not 0.0 <= v <= 1.0:
            raise InvalidScenario(f"$.desirability.{k}: {v} outside [0, 1]")

    cost_multiplier = raw.get("cost_multiplier", "undesirability")
    if cost_multiplier not in ("undesirability", "desirability"):
        raise InvalidScenario(f"$.cost_multiplier: unknown mode {cost_multiplier!r}")

    seg = raw.get("segmentation", {})
    _check_keys(seg, "$.segmentation", required=(), optional=("blur_sigma", "noise_amp"))
    lm = raw.get("landmark", {})
    _check_keys(lm, "$.landmark", required=(), optional=("detect_period_s", "noise_sigma", "default_range"))
    lidar = raw.get("lidar", {})
    _check_keys(lidar, "$.lidar", required=(), optional=("beams", "max_range"))

    ref = None
    if "reference_path" in raw:
        ref = _points(raw["reference_path"], "$.reference_path")
        if len(ref) < 2:
            raise InvalidScenario("$.reference_path: needs at least 2 points")

    return ScenarioConfig(
        name=raw.get("name", name),
        instruction=raw["instruction"],
        world=world,
        start=start_pose,
        camera=cam,
        planner=planner_cfg,
        bounds=bounds,
        timeout_s=_number(raw["timeout_s"], "$.timeout_s"),
        seeds={k: int(seeds[k]) for k in ("sim", "optimizer", "noise")},
        backends=backends,
        desirability=desirability,
        cost_multiplier=cost_multiplier,
        blur_sigma=_number(seg.get("blur_sigma", 0.0), "$.segmentation.blur_sigma"),
        noise_amp=_number(seg.get("noise_amp", 0.0), "$.segmentation.noise_amp"),
        detect_period_s=_number(lm.get("detect_period_s", 2.0), "$.landmark.detect_period_s"),
        landmark_noise_sigma=_number(lm.get("noise_sigma", 0.0), "$.landmark.noise_sigma"),
        default_range=_number(lm.get("default_range", 10.0), "$.landmark.default_range"),
        lidar_beams=int(lidar.get("beams", 360)),
        lidar_max_range=_number(lidar.get("max_range", 10.0), "$.lidar.max_range"),
        reference_path=ref,
        raw=raw,
    )


def _parse_world(raw: dict) -> World:
    _check_keys(
        raw,
        "$.world",
        required=("bounds", "landmarks"),
        optional=("default_label", "robot_radius", "terrain", "obstacles", "actors"),
    )
    bounds = raw["bounds"]
    if not isinstance(bounds, list) or len(bounds) != 4:
        raise InvalidScenario("$.world.bounds: expected [xmin, ymin, xmax, ymax]")
    bounds = tuple(_number(v, f"$.world.bounds[{i}]") for i, v in enumerate(bounds))
    if bounds[0] >= bounds[2] or bounds[1] >= bounds[3]:
        raise InvalidScenario("$.world.bounds: min must be below max")

    terrain = []
    for i, region in enumerate(raw.get("terrain", [])):
        path = f"$.world.terrain[{i}]"
        _check_keys(region, path, required=("label", "polygon"), optional=("order",))
        try:
            terrain.append(
                TerrainRegion(
                    label=str(region["label"]),
                    polygon=_points(region["polygon"], f"{path}.polygon"),
                    order=int(region.get("order", 0)),
                )
            )
        except ValueError as e:
            raise InvalidScenario(f"{path}: {e}") from e

    obstacles = []
    for i, obs in enumerate(raw.get("obstacles", [])):
        path = f"$.world.obstacles[{i}]"
        if not isinstance(obs, dict) or "type" not in obs:
            raise InvalidScenario(f"{path}.type: missing")
        try:
            if obs["type"] == "circle":
                _check_keys(obs, path, required=("type", "center", "radius"))
                obstacles.append(
                    CircleObstacle(center=_point(obs["center"], f"{path}.center"), radius=_number(obs["radius"], f"{path}.radius"))
                )
            elif obs["type"] == "polygon":
                _check_keys(obs, path, required=("type", "points"))
                obstacles.append(PolygonObstacle(points=_points(obs["points"], f"{path}.points")))
            else:
                raise InvalidScenario(f"{path}.type: unknown obstacle type {obs['type']!r}")
        except ValueError as e:
            raise InvalidScenario(f"{path}: {e}") from e

    actors = []
    for i, actor in enumerate(raw.get("actors", [])):
        path = f"$.world.actors[{i}]"
        _check_keys(
            actor,
            path,
            required=("kind", "label", "waypoints"),
            optional=("footprint_radius", "active_window"),
        )
        wps = actor["waypoints"]
        if not isinstance(wps, list) or not wps or any(not isinstance(w, list) or len(w) != 3 for w in wps):
            raise InvalidScenario(f"{path}.waypoints: expected [[t, x, y], ...]")
        times = [_number(w[0], f"{path}.waypoints[{j}][0]") for j, w in enumerate(wps)]
        pts = [[_number(w[1], ""), _number(w[2], "")] for w in wps]
        window = None
        if "active_window" in actor:
            aw = actor["active_window"]
            if not isinstance(aw, list) or len(aw) != 2:
                raise InvalidScenario(f"{path}.active_window: expected [t_start, t_end]")
            window = (_number(aw[0], f"{path}.active_window[0]"), _number(aw[1], f"{path}.active_window[1]"))
        try:
            actors.append(
                ScriptedActor(
                    kind=str(actor["kind"]),
                    label=str(actor["label"]),
                    times=np.array(times),
                    points=np.array(pts),
                    footprint_radius=_number(actor.get("footprint_radius", 0.3), f"{path}.footprint_radius"),
                    active_window=window,
                )
            )
        except ValueError as e:
            raise InvalidScenario(f"{path}: {e}") from e

    landmarks = []
    for i, lm in enumerate(raw.get("landmarks", [])):
        path = f"$.world.landmarks[{i}]"
        _check_keys(lm, path, required=("text", "position"))
        landmarks.append(Landmark(text=str(lm["text"]), position=_point(lm["position"], f"{path}.position")))
    if not landmarks:
        raise InvalidScenario("$.world.landmarks: at least one landmark is required")

    return World(
        bounds=bounds,
        default_label=str(raw.get("default_label", "ground")),
        terrain=terrain,
        obstacles=obstacles,
        actors=actors,
        landmarks=landmarks,
        robot_radius=_number(raw.get("robot_radius", 0.3), "$.world.robot_radius"),
    )


def _parse_camera(raw: dict) -> CameraModel:
    _check_keys(
        raw,
        "$.camera",
        required=("fx", "fy", "cx", "cy", "width", "height", "mount_height", "mount_pitch"),
        optional=("mount_offset",),
    )
    try:
        return CameraModel(
            fx=_number(raw["fx"], "$.camera.fx"),
            fy=_number(raw["fy"], "$.camera.fy"),
            cx=_number(raw["cx"], "$.camera.cx"),
            cy=_number(raw["cy"], "$.camera.cy"),
            width=int(raw["width"]),
            height=int(raw["height"]),
            mount_height=_number(raw["mount_height"], "$.camera.mount_height"),
            mount_pitch=_number(raw["mount_pitch"], "$.camera.mount_pitch"),
            mount_offset=_number(raw.get("mount_offset", 0.0), "$.camera.mount_offset"),
        )
    except ValueError as e:
        raise InvalidScenario(f"$.camera: {e}") from e


def _parse_planner(raw: dict) -> tuple[PlannerConfig, ParamBounds]:
    _check_keys(
        raw,
        "$.planner",
        required=(),
        optional=(
            "k1", "k2", "horizon_steps", "dt", "lam", "d_safe", "obstacle_clamp",
            "c_th", "d_th", "w_goal", "w_obs", "w_behav", "behav_aggregate",
            "opt_budget", "bounds",
        ),
    )
    kwargs = {}
    for key in ("k1", "k2", "lam", "d_safe", "obstacle_clamp", "c_th", "d_th", "w_goal", "w_obs", "w_behav", "dt"):
        if key in raw:
            kwargs[key] = _number(raw[key], f"$.planner.{key}")
    for key in ("horizon_steps", "opt_budget"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "behav_aggregate" in raw:
        kwargs["behav_aggregate"] = raw["behav_aggregate"]
    try:
        cfg = PlannerConfig(**kwargs)
    except ValueError as e:
        raise InvalidScenario(f"$.planner: {e}") from e

    bounds = ParamBounds()
    if "bounds" in raw:
        b = raw["bounds"]
        _check_keys(b, "$.planner.bounds", required=("lower", "upper"))
        for side in ("lower", "upper"):
            if not isinstance(b[side], list) or len(b[side]) != 4:
                raise InvalidScenario(f"$.planner.bounds.{side}: expected [r, theta, delta, v_max]")
        try:
            bounds = ParamBounds(
                lower=TrajectoryParams(*(float(v) for v in b["lower"])),
                upper=TrajectoryParams(*(float(v) for v in b["upper"])),
            )
        except ValueError as e:
            raise InvalidScenario(f"$.planner.bounds: {e}") from e
    return cfg, bounds


def _parse_backends(raw: dict) -> BackendsConfig:
    _check_keys(
        raw,
        "$.backends",
        required=(),
        optional=(
            "mode", "fallback", "llm_url", "vlm_url", "llm_fixtures", "vlm_fixtures",
            "timeout_s", "retries", "simulate_latency",
        ),
    )
    mode = raw.get("mode", "oracle")
    if mode not in ("oracle", "replay", "live"):
        raise InvalidScenario(f"$.backends.mode: unknown mode {mode!r}")
    cfg = BackendsConfig(
        mode=mode,
        fallback=bool(raw.get("fallback", True)),
        llm_url=str(raw.get("llm_url", "")),
        vlm_url=str(raw.get("vlm_url", "")),
        llm_fixtures=raw.get("llm_fixtures"),
        vlm_fixtures=raw.get("vlm_fixtures"),
        timeout_s=_number(raw.get("timeout_s", 10.0), "$.backends.timeout_s"),
        retries=int(raw.get("retries", 2)),
        simulate_latency=bool(raw.get("simulate_latency", False)),
    )
    if mode == "live" and not (cfg.llm_url and cfg.vlm_url):
        raise InvalidScenario("$.backends: live mode needs llm_url and vlm_url")
    if mode == "replay" and not (cfg.llm_fixtures and cfg.vlm_fixtures):
        raise InvalidScenario("$.backends: replay mode needs llm_fixtures and vlm_fixtures")
    return cfg
