"""Scenario execution: the per-tick perceive/plan/act loop, run logs, offline
replay, and trajectory export.

The run log is line-delimited JSON: a header record (config digest, rules,
metric parameters), one record per tick, and a terminal end record with the
tick count so truncation is detectable. Log content is a pure function of
the scenario and its seeds; wall-clock timing only ever appears in the
summary, never in the log.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import costmap as costmap_mod
from . import gateway, instruction, landmark, metrics, simulator
from .geometry import Pose2D
from .planner import plan_step
from .scenario import ScenarioConfig

__all__ = [
    "BackendFailure",
    "CorruptLog",
    "RunSummary",
    "export_csv",
    "read_log",
    "replay_log",
    "run_scenario",
]

log = logging.getLogger(__name__)

STOP_SPEED = metrics.STOP_SPEED


class BackendFailure(Exception):
    """A required backend kept failing and fallbacks were disabled."""


class CorruptLog(Exception):
    """Run log is unreadable, truncated, or inconsistent."""


@dataclass
class RunSummary:
    success: bool
    bfa_pct: float
    heading_err_rad: float
    frechet_m: float | None
    path_length_m: float
    ticks: int
    mean_tick_wall_ms: float | None

    def core_fields(self) -> dict:
        """Everything recomputable from the log (excludes wall time)."""
        d = asdict(self)
        d.pop("mean_tick_wall_ms")
        return d


_GATEWAY_ERRORS = (
    gateway.BackendUnavailable,
    gateway.TimedOut,
    gateway.FixtureMiss,
    gateway.MalformedResponse,
)


def _make_clients(scn: ScenarioConfig, latency_sink=None):
    b = scn.backends
    if b.mode == "oracle":
        return None, None
    if b.mode == "replay":
        llm = gateway.BackendEndpoint(mode="replay", fixture_path=b.llm_fixtures, auth_env=gateway.LLM_TOKEN_ENV)
        vlm = gateway.BackendEndpoint(mode="replay", fixture_path=b.vlm_fixtures, auth_env=gateway.VLM_TOKEN_ENV)
    else:
        # live; with fixture paths set, record as we go
        llm_mode = "record" if b.llm_fixtures else "live"
        vlm_mode = "record" if b.vlm_fixtures else "live"
        llm = gateway.BackendEndpoint(
            base_url=b.llm_url, mode=llm_mode, fixture_path=b.llm_fixtures,
            timeout_s=b.timeout_s, retries=b.retries, auth_env=gateway.LLM_TOKEN_ENV,
        )
        vlm = gateway.BackendEndpoint(
            base_url=b.vlm_url, mode=vlm_mode, fixture_path=b.vlm_fixtures,
            timeout_s=b.timeout_s, retries=b.retries, auth_env=gateway.VLM_TOKEN_ENV,
        )
    sink = latency_sink if b.simulate_latency else None
    return gateway.GatewayClient(llm), gateway.GatewayClient(vlm, latency_sink=sink)


def _resolve_instruction(scn: ScenarioConfig, llm_client) -> tuple[instruction.InstructionBundle, list]:
    """Decompose and score the instruction; backend when configured, lexicon
    fallback otherwise (or on backend failure with fallback enabled)."""
    prompts = instruction.load_prompts(scn.instruction)
    bundle = None
    values = None
    if llm_client is not None:
        try:
            bundle = instruction.decompose(scn.instruction, prompts, llm_client)
            values = instruction.score_desirability(bundle.behav_actions, prompts, llm_client)
        except _GATEWAY_ERRORS as e:
            if not scn.backends.fallback:
                raise BackendFailure(f"instruction backend: {e}") from e
            log.warning("instruction backend failed (%s), using lexicon fallback", e)
            bundle = None
            values = None
    if bundle is None:
        try:
            bundle = instruction.decompose_fallback(scn.instruction)
        except instruction.UnclassifiableClause as e:
            log.warning("unclassifiable clauses skipped: %s", e)
            bundle = e.bundle
    if values is None:
        values = instruction.score_desirability_fallback(bundle.behav_actions, scn.desirability)
    rules = instruction.pair_rules(bundle, values)
    return bundle, rules


class _LandmarkStage:
    """Detection with the configured backend, oracle fallback on errors."""

    def __init__(self, scn: ScenarioConfig, vlm_client):
        self.oracle = landmark.OracleLandmarkBackend(
            scn.world, scn.camera, noise_sigma=scn.landmark_noise_sigma, seed=scn.seeds["noise"]
        )
        self.http = None
        if vlm_client is not None:
            self.http = landmark.HttpLandmarkBackend(vlm_client, instruction.load_prompts(scn.instruction))
        self.fallback = scn.backends.fallback

    def detect(self, image, robot, t, index, text):
        if self.http is not None:
            try:
                return self.http.detect(image, robot, t, index, text)
            except _GATEWAY_ERRORS as e:
                if not self.fallback:
                    raise BackendFailure(f"landmark backend: {e}") from e
                log.warning("landmark backend failed (%s), using oracle", e)
        return self.oracle.detect(image, robot, t, index, text)


def _segment_seed(base: int, tick: int, rule_index: int) -> int:
    return base * 1000003 + tick * 131 + rule_index


def run_scenario(scn: ScenarioConfig, out_dir: Path | str | None = None):
    """Execute one scenario; returns (RunSummary, header, records).

    With out_dir set, writes run_log.jsonl, summary.json, and the final fused
    cost map as costmap.pgm / costmap.raw.
    """
    pending_latency: list[float] = []
    llm_client, vlm_client = _make_clients(scn, latency_sink=pending_latency.append)
    bundle, rules = _resolve_instruction(scn, llm_client)
    gait = instruction.gait_caution_flag(bundle.behav_actions)
    lm_stage = _LandmarkStage(scn, vlm_client)
    n_landmarks = len(bundle.nav_landmarks)

    cfg = scn.planner
    cam = scn.camera
    world = scn.world
    header = {
        "type": "header",
        "version": 1,
        "config_digest": scn.config_digest,
        "name": scn.name,
        "instruction": scn.instruction,
        "rules": [[r.action, r.target, r.desirability] for r in rules],
        "gait_caution": gait,
        "n_landmarks": n_landmarks,
        "dt": cfg.dt,
        "d_th": cfg.d_th,
        "timeout_s": scn.timeout_s,
        "reference_path": None if scn.reference_path is None else [[float(x), float(y)] for x, y in scn.reference_path],
    }

    pose = scn.start
    lock = landmark.GoalLock(reached_threshold=cfg.d_th)
    records: list[dict] = []
    wall: list[float] = []
    last_query_t: float | None = None
    last_cost = costmap_mod.zero_cost_map(cam.width, cam.height)
    t = 0.0
    tick = 0
    v_nominal = scn.bounds.upper.v_max

    while t < scn.timeout_s - 1e-9:
        tic = time.perf_counter()
        world_t = simulator.actors_update(world, t)
        image = simulator.render_label_image(world_t, pose, cam, t)
        lidar_pts = simulator.lidar_scan(world_t, pose, t, beams=scn.lidar_beams, max_range=scn.lidar_max_range)
        if len(lidar_pts):
            c, s = math.cos(pose.heading), math.sin(pose.heading)
            obstacles = np.stack(
                [pose.x + c * lidar_pts[:, 0] - s * lidar_pts[:, 1],
                 pose.y + s * lidar_pts[:, 0] + c * lidar_pts[:, 1]], axis=1)
        else:
            obstacles = None

        if rules:
            per_rule = []
            for i, rule in enumerate(rules):
                seg = simulator.oracle_segment(
                    image, rule.target, blur_sigma=scn.blur_sigma,
                    noise_amp=scn.noise_amp, seed=_segment_seed(scn.seeds["noise"], tick, i),
                )
                per_rule.append(costmap_mod.target_cost(seg, rule.desirability, mode=scn.cost_multiplier))
            cmap = costmap_mod.fuse(per_rule)
        else:
            cmap = costmap_mod.zero_cost_map(cam.width, cam.height)
        last_cost = cmap
        max_c = costmap_mod.max_cost(cmap)
        stop_active = max_c >= cfg.c_th and (1.0 - max_c) * v_nominal <= STOP_SPEED

        detection = None
        if lock.landmark_index < n_landmarks:
            due = lock.current is None or last_query_t is None or (t - last_query_t) >= scn.detect_period_s - 1e-9
            if due:
                text = bundle.nav_landmarks[lock.landmark_index]
                pixel = lm_stage.detect(image, pose, t, lock.landmark_index, text)
                last_query_t = t
                if pixel is not None:
                    detection = landmark.pixel_goal_to_odom(pixel, pose, cam, default_range=scn.default_range)
        lock = landmark.update_goal_lock(lock, detection, pose)

        col = simulator.collision(world_t, pose)
        terrain = simulator.terrain_label_at(world_t, (pose.x, pose.y))

        if lock.landmark_index >= n_landmarks:
            cmd = (0.0, 0.0)
            costs = (0.0, 0.0, 0.0)
            goal_xy = None
        elif stop_active:
            # cap already pins speed at or below the stop threshold; hold in
            # place rather than optimize over a (near-)empty velocity box
            cmd = (0.0, 0.0)
            costs = (0.0, 0.0, 0.0)
            goal_xy = None if lock.current is None else (lock.current.x, lock.current.y)
        elif lock.current is not None:
            plan = plan_step(
                pose, (lock.current.x, lock.current.y), cmap, obstacles, bundle,
                cfg, scn.bounds, scn.seeds["optimizer"] + tick, cam,
            )
            cmd = plan.command
            costs = plan.cost_terms
            goal_xy = (lock.current.x, lock.current.y)
        else:
            cmd = (0.0, 0.0)
            costs = (0.0, 0.0, 0.0)
            goal_xy = None

        records.append({
            "type": "tick",
            "t": round(t, 9),
            "pose": [float(pose.x), float(pose.y), float(pose.heading)],
            "cmd": [float(cmd[0]), float(cmd[1])],
            "costs": [float(costs[0]), float(costs[1]), float(costs[2])],
            "max_c": float(max_c),
            "gait": bool(gait),
            "collision": bool(col),
            "stop_active": bool(stop_active),
            "terrain": terrain,
            "goal": None if goal_xy is None else [float(goal_xy[0]), float(goal_xy[1])],
            "lm_i": int(lock.landmark_index),
        })
        wall.append(time.perf_counter() - tic)
        if lock.landmark_index >= n_landmarks:
            break
        pose = simulator.step(pose, cmd[0], cmd[1], cfg.dt)
        t += cfg.dt
        if pending_latency:
            t += sum(pending_latency)
            pending_latency.clear()
        tick += 1

    mean_wall_ms = float(np.mean(wall) * 1000.0) if wall else None
    summary = _summarize(header, records, mean_wall_ms)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_log(out / "run_log.jsonl", header, records)
        (out / "summary.json").write_text(_summary_json(summary), encoding="utf-8")
        costmap_mod.save_pgm(last_cost, out / "costmap.pgm")
        costmap_mod.save_raw(last_cost, out / "costmap.raw")
    return summary, header, records


def _summary_json(summary: RunSummary) -> str:
    return json.dumps(asdict(summary), indent=2, sort_keys=True) + "\n"


def _summarize(
    header: dict, records: list[dict], mean_wall_ms: float | None, u_threshold: float = 0.5
) -> RunSummary:
    rules = [instruction.BehaviorRule(a, tgt, p) for a, tgt, p in header["rules"]]
    n_landmarks = header["n_landmarks"]
    try:
        bfa_pct = metrics.bfa(records, rules, u_threshold=u_threshold)
    except metrics.ZeroLength:
        bfa_pct = 0.0
    ok = n_landmarks > 0 and metrics.success(
        records, n_landmarks, header["d_th"], header["timeout_s"], rules
    )
    frechet_m = None
    if header.get("reference_path") and len(records) >= 1:
        path = np.array([r["pose"][:2] for r in records])
        ref = np.array(header["reference_path"])
        frechet_m = float(metrics.frechet(metrics.resample(path), metrics.resample(ref)))
    return RunSummary(
        success=bool(ok),
        bfa_pct=float(bfa_pct),
        heading_err_rad=float(metrics.heading_error(records)),
        frechet_m=frechet_m,
        path_length_m=float(metrics.path_length(records)),
        ticks=len(records),
        mean_tick_wall_ms=mean_wall_ms,
    )


def write_log(path: Path | str, header: dict, records: list[dict]) -> None:
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines += [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
    lines.append(json.dumps({"type": "end", "ticks": len(records)}, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_log(path: Path | str) -> tuple[dict, list[dict]]:
    """Parse and check a run log; raises CorruptLog on any inconsistency."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CorruptLog(f"cannot read {path}: {e}") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CorruptLog(f"{path}: empty log")
    parsed = []
    for i, line in enumerate(lines, start=1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise CorruptLog(f"{path}:{i}: bad JSON ({e})") from e
    header, body = parsed[0], parsed[1:]
    if header.get("type") != "header":
        raise CorruptLog(f"{path}: first record is not a header")
    if not body or body[-1].get("type") != "end":
        raise CorruptLog(f"{path}: missing end record (truncated?)")
    end, records = body[-1], body[:-1]
    if any(r.get("type") != "tick" for r in records):
        raise CorruptLog(f"{path}: unexpected record type in body")
    if end.get("ticks") != len(records):
        raise CorruptLog(f"{path}: end record expects {end.get('ticks')} ticks, found {len(records)}")
    return header, records


def replay_log(path: Path | str, u_threshold: float = 0.5) -> RunSummary:
    """Recompute every metric from a log; timing is not recoverable and is
    reported as None. u_threshold overrides the compliance cutoff fed to the
    behavior-following accuracy recomputation."""
    header, records = read_log(path)
    return _summarize(header, records, None, u_threshold=u_threshold)


def export_csv(log_path: Path | str, csv_path: Path | str) -> int:
    """Write per-tick trajectory rows; returns the number of data rows.

    Columns: t,x,y,heading,v,omega,max_c,gait_caution. Floats use 9
    significant digits, enough for exact float round-trips at this scale.
    """
    _, records = read_log(log_path)
    rows = ["t,x,y,heading,v,omega,max_c,gait_caution"]
    for r in records:
        x, y, h = r["pose"]
        v, w = r["cmd"]
        rows.append(
            f"{r['t']:.9g},{x:.9g},{y:.9g},{h:.9g},{v:.9g},{w:.9g},{r['max_c']:.9g},{int(bool(r['gait']))}"
        )
    Path(csv_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return len(records)
