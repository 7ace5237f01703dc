"""Sampling MPC over egocentric trajectory parameters.

A candidate z = (r, theta, delta, v_max) places a virtual target r meters
from the robot along bearing heading - delta with target heading
bearing + theta; the pose-following control law steers toward it and the
closed-loop rollout is scored by goal progress, obstacle proximity, and
behavioral pixel cost. A low-discrepancy global phase plus bounded
Nelder-Mead refinement picks the best candidate each tick, and the maximum
behavioral cost in view caps the allowed speed before optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize as sciopt
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import costmap as costmap_mod
from . import instruction as instruction_mod
from .costmap import CostMap
from .geometry import CameraModel, EgocentricGoal, Pose2D, project_points_clamped, wrap

__all__ = [
    "DegenerateRange",
    "NoGoal",
    "ParamBounds",
    "PlanResult",
    "PlannerConfig",
    "Trajectory",
    "TrajectoryParams",
    "ZeroBaseline",
    "apply_velocity_cap",
    "behavior_cost",
    "control_law",
    "goal_cost",
    "obstacle_cost",
    "optimize",
    "plan_step",
    "rollout",
    "total_cost",
    "virtual_target",
]

STOP_RADIUS = 0.05


class DegenerateRange(Exception):
    """Control law is undefined at (numerically) zero range."""


class ZeroBaseline(Exception):
    """Goal cost needs a positive robot-to-goal baseline distance."""


class NoGoal(Exception):
    """Planning requires a locked goal; caller should command (0, 0)."""


@dataclass(frozen=True)
class TrajectoryParams:
    r: float
    theta: float
    delta: float
    v_max: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.delta, self.v_max])


@dataclass(frozen=True)
class ParamBounds:
    lower: TrajectoryParams = TrajectoryParams(0.5, -math.pi / 2, -math.pi / 2, 0.0)
    upper: TrajectoryParams = TrajectoryParams(6.0, math.pi / 2, math.pi / 2, 1.0)

    def __post_init__(self):
        lo, hi = self.lower.as_array(), self.upper.as_array()
        if np.any(lo > hi):
            raise ValueError("lower bounds exceed upper bounds")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.as_array(), self.upper.as_array()

    def clip(self, z: np.ndarray) -> np.ndarray:
        lo, hi = self.arrays()
        return np.clip(z, lo, hi)


@dataclass(frozen=True)
class PlannerConfig:
    k1: float = 1.0
    k2: float = 3.0
    horizon_steps: int = 30
    dt: float = 0.1
    lam: float = 0.5
    d_safe: float = 0.7
    obstacle_clamp: float = 1e3
    c_th: float = 0.8
    d_th: float = 0.5
    w_goal: float = 1.0
    w_obs: float = 1.0
    w_behav: float = 2.0
    behav_aggregate: str = "sum"
    opt_budget: int = 256

    def __post_init__(self):
        if self.behav_aggregate not in ("sum", "max"):
            raise ValueError("behav_aggregate must be 'sum' or 'max'")
        if self.dt <= 0 or self.horizon_steps < 1:
            raise ValueError("horizon must have at least one positive step")


@dataclass
class Trajectory:
    """Closed-loop rollout samples; arrays share index (sample k at time
    times[k]); `target` is the virtual target the rollout chased."""

    params: TrajectoryParams
    start: Pose2D
    target: Pose2D
    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    headings: np.ndarray
    speed: float

    @property
    def samples(self) -> list[tuple[float, Pose2D, float]]:
        return [
            (float(t), Pose2D(float(x), float(y), float(h)), self.speed)
            for t, x, y, h in zip(self.times, self.xs, self.ys, self.headings)
        ]


@dataclass
class PlanResult:
    command: tuple[float, float]
    params: TrajectoryParams
    trajectory: Trajectory
    cost_terms: tuple[float, float, float]
    total_cost: float
    max_c: float
    capped_v_max: float
    gait_caution: bool


def control_law(goal: EgocentricGoal, v: float, k1: float, k2: float) -> float:
    """Pose-following angular rate toward an egocentric goal."""
    if goal.r <= 1e-6:
        raise DegenerateRange(f"range {goal.r} too small")
    theta, delta = goal.theta, goal.delta
    return (v / goal.r) * (
        k2 * (delta - math.atan(-k1 * theta))
        + (1.0 + k1) / (1.0 + k1 * k1 * theta * theta) * math.sin(delta)
    )


def virtual_target(start: Pose2D, z: TrajectoryParams) -> Pose2D:
    """Pose z parameterizes, seen from the start pose."""
    bearing = start.heading - z.delta
    return Pose2D(
        start.x + z.r * math.cos(bearing),
        start.y + z.r * math.sin(bearing),
        bearing + z.theta,
    )


def rollout(start: Pose2D, z: TrajectoryParams, cfg: PlannerConfig) -> Trajectory:
    """Integrate the closed loop toward z's virtual target.

    Constant speed v_max, angular rate from the control law, one exact
    constant-(v, omega) arc per dt step. Integration stops once within
    STOP_RADIUS of the virtual target; the pose then parks there and the
    remaining samples repeat it, so every trajectory carries exactly
    horizon_steps samples and sum-over-horizon costs stay comparable
    across candidates.

    The law's angles are measured from the robot to the line of sight
    (delta = bearing - heading, theta = bearing - target heading); this is
    the sign under which the angular rate turns the robot toward the line
    of sight, giving initial curvature of -sign(z.delta) and convergence.
    """
    target = virtual_target(start, z)
    x, y, h = start.x, start.y, start.heading
    v = z.v_max
    times, xs, ys, hs = [], [], [], []
    for i in range(cfg.horizon_steps):
        dx, dy = target.x - x, target.y - y
        dist = math.hypot(dx, dy)
        if dist >= STOP_RADIUS:
            bearing = math.atan2(dy, dx)
            ego = EgocentricGoal(dist, wrap(bearing - target.heading), wrap(bearing - h))
            omega = control_law(ego, v, cfg.k1, cfg.k2)
            if abs(omega) < 1e-9:
                x += v * cfg.dt * math.cos(h)
                y += v * cfg.dt * math.sin(h)
            else:
                h2 = h + omega * cfg.dt
                radius = v / omega
                x += radius * (math.sin(h2) - math.sin(h))
                y += radius * (math.cos(h) - math.cos(h2))
                h = h2
        times.append((i + 1) * cfg.dt)
        xs.append(x)
        ys.append(y)
        hs.append(h)
    return Trajectory(
        params=z,
        start=start,
        target=target,
        times=np.asarray(times),
        xs=np.asarray(xs),
        ys=np.asarray(ys),
        headings=np.asarray(hs),
        speed=v,
    )


def _wrap_array(a: np.ndarray) -> np.ndarray:
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def _rollout_batch(start: Pose2D, Z: np.ndarray, cfg: PlannerConfig):
    """Vectorized rollout of N candidates; returns (xs, ys) with shape
    (N, horizon_steps). Candidates that reach their virtual target park
    there and repeat the pose for the remaining steps."""
    N = Z.shape[0]
    r, th, de, vmax = Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3]
    bearing0 = start.heading - de
    tx = start.x + r * np.cos(bearing0)
    ty = start.y + r * np.sin(bearing0)
    th_t = bearing0 + th
    x = np.full(N, start.x)
    y = np.full(N, start.y)
    h = np.full(N, float(start.heading))
    active = np.ones(N, dtype=bool)
    T = cfg.horizon_steps
    xs = np.empty((N, T))
    ys = np.empty((N, T))
    k1, k2, dt = cfg.k1, cfg.k2, cfg.dt
    for i in range(T):
        dx = tx - x
        dy = ty - y
        dist = np.hypot(dx, dy)
        active = active & (dist >= STOP_RADIUS)
        if not active.any():
            xs[:, i:] = x[:, None]
            ys[:, i:] = y[:, None]
            break
        dist_safe = np.maximum(dist, STOP_RADIUS)
        bearing = np.arctan2(dy, dx)
        # robot-to-line-of-sight angles; see rollout()
        delta = _wrap_array(bearing - h)
        theta = _wrap_array(bearing - th_t)
        omega = (vmax / dist_safe) * (
            k2 * (delta - np.arctan(-k1 * theta))
            + (1.0 + k1) / (1.0 + k1 * k1 * theta * theta) * np.sin(delta)
        )
        straight = np.abs(omega) < 1e-9
        omega_safe = np.where(straight, 1.0, omega)
        h2 = h + omega * dt
        radius = vmax / omega_safe
        nx = np.where(straight, x + vmax * dt * np.cos(h), x + radius * (np.sin(h2) - np.sin(h)))
        ny = np.where(straight, y + vmax * dt * np.sin(h), y + radius * (np.cos(h) - np.cos(h2)))
        x = np.where(active, nx, x)
        y = np.where(active, ny, y)
        h = np.where(active, h2, h)
        xs[:, i] = x
        ys[:, i] = y
    return xs, ys


def goal_cost(traj: Trajectory, goal_xy: tuple[float, float], d_tot: float) -> float:
    """Sum of sample-to-goal distances, each normalized by the cycle-start
    baseline d_tot."""
    if d_tot <= 1e-9:
        raise ZeroBaseline(f"baseline distance {d_tot} too small")
    if traj.times.size == 0:
        return 0.0
    d = np.hypot(traj.xs - goal_xy[0], traj.ys - goal_xy[1])
    return float(np.sum(d / d_tot))


def obstacle_cost(traj: Trajectory, obstacles: np.ndarray | None, cfg: PlannerConfig) -> float:
    """Inverse-distance penalty inside d_safe, each term clamped."""
    if obstacles is None or len(obstacles) == 0 or traj.times.size == 0:
        return 0.0
    tree = cKDTree(np.asarray(obstacles, dtype=np.float64))
    pts = np.stack([traj.xs, traj.ys], axis=1)
    d_min, _ = tree.query(pts)
    return float(np.sum(_obstacle_terms(d_min, cfg)))


def _obstacle_terms(d_min: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
    with np.errstate(divide="ignore"):
        inv = np.where(d_min > 0.0, 1.0 / np.maximum(d_min, 1e-300), np.inf)
    terms = np.minimum(inv - 1.0 / cfg.d_safe, cfg.obstacle_clamp)
    return np.where(d_min < cfg.d_safe, terms, 0.0)


def behavior_cost(
    traj: Trajectory,
    cm: CostMap,
    cam: CameraModel,
    robot: Pose2D,
    cfg: PlannerConfig,
) -> float:
    """Behavioral pixel cost along the rollout, discounted by distance.

    Each sample is projected into the current frame's cost map; samples
    behind the image plane contribute zero, samples in front but outside the
    frustum read the nearest image pixel. Aggregation over the horizon is a
    sum by default, or a max when cfg.behav_aggregate == "max".
    """
    if traj.times.size == 0:
        return 0.0
    u, v, front = project_points_clamped(cam, robot, traj.xs, traj.ys)
    c = costmap_mod.sample_many(cm, u, v) * front
    d = np.hypot(traj.xs - robot.x, traj.ys - robot.y)
    contrib = c * np.exp(-cfg.lam * d)
    if cfg.behav_aggregate == "max":
        return float(contrib.max()) if contrib.size else 0.0
    return float(np.sum(contrib))


def total_cost(terms: tuple[float, float, float], cfg: PlannerConfig) -> float:
    return cfg.w_goal * terms[0] + cfg.w_obs * terms[1] + cfg.w_behav * terms[2]


def apply_velocity_cap(
    bounds: ParamBounds, max_c: float, c_th: float, v_max_nominal: float
) -> ParamBounds:
    """Cap the sampled speed range when extreme behavioral cost is in view.

    Recomputed from the nominal bound every tick; no hysteresis. max_c at or
    above c_th rescales the upper speed to (1 - max_c) * v_max_nominal.
    """
    upper_v = (1.0 - max_c) * v_max_nominal if max_c >= c_th else v_max_nominal
    upper_v = max(0.0, upper_v)
    lower_v = min(bounds.lower.v_max, upper_v)
    return ParamBounds(
        lower=replace(bounds.lower, v_max=lower_v),
        upper=replace(bounds.upper, v_max=upper_v),
    )


def optimize(
    objective,
    bounds: ParamBounds,
    seed: int,
    budget: int,
    batch_objective=None,
) -> tuple[TrajectoryParams, float]:
    """Global low-discrepancy sampling plus local simplex refinement.

    budget/2 scrambled-Halton candidates (deterministic per seed) are scored
    first; bounded Nelder-Mead then refines the best 3, splitting the
    remaining budget evenly. Returns the best point/value seen anywhere, so
    the result is never worse than the best global sample; ties resolve to
    the earliest evaluation.
    """
    if budget < 16:
        raise ValueError("budget must be >= 16")
    lo, hi = bounds.arrays()
    n_global = budget // 2
    sampler = qmc.Halton(d=4, scramble=True, rng=np.random.default_rng(seed))
    unit = sampler.random(n_global)
    # a saturated velocity cap can pin a dimension to a point; qmc.scale
    # requires strict lo < hi, so scale pinned dimensions by hand
    pinned = hi - lo <= 0.0
    hi_open = np.where(pinned, lo + 1.0, hi)
    Z = qmc.scale(unit, lo, hi_open)
    Z[:, pinned] = lo[pinned]
    if batch_objective is not None:
        J = np.asarray(batch_objective(Z), dtype=np.float64)
    else:
        J = np.array([float(objective(z)) for z in Z])

    evals_z = [Z]
    evals_j = [J]
    order = np.argsort(J, kind="stable")
    n_starts = int(min(3, n_global))
    per_start = max(1, (budget - n_global) // max(1, n_starts))
    span = hi - lo

    def wrapped(z):
        zc = np.clip(z, lo, hi)
        val = float(objective(zc))
        local_z.append(zc.copy())
        local_j.append(val)
        return val

    for idx in order[:n_starts]:
        local_z: list[np.ndarray] = []
        local_j: list[float] = []
        sciopt.minimize(
            wrapped,
            Z[idx],
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "maxfev": per_start,
                "xatol": 1e-4 * float(span.max()),
                "fatol": 1e-10,
                "adaptive": False,
            },
        )
        if local_z:
            evals_z.append(np.stack(local_z))
            evals_j.append(np.asarray(local_j))

    all_z = np.concatenate(evals_z, axis=0)
    all_j = np.concatenate(evals_j)
    best = int(np.argmin(all_j))
    zb = bounds.clip(all_z[best])
    return TrajectoryParams(*(float(c) for c in zb)), float(all_j[best])


def plan_step(
    robot: Pose2D,
    goal_xy: tuple[float, float] | None,
    cm: CostMap,
    obstacles: np.ndarray | None,
    bundle: "instruction_mod.InstructionBundle | None",
    cfg: PlannerConfig,
    bounds: ParamBounds,
    seed: int,
    cam: CameraModel,
) -> PlanResult:
    """One full planning cycle: velocity cap, optimize, derive the command.

    Deterministic given identical inputs and seed. Raises NoGoal without a
    goal; the caller should command (0, 0).
    """
    if goal_xy is None:
        raise NoGoal("no locked goal")
    max_c = costmap_mod.max_cost(cm)
    capped = apply_velocity_cap(bounds, max_c, cfg.c_th, bounds.upper.v_max)
    d_tot = math.hypot(goal_xy[0] - robot.x, goal_xy[1] - robot.y)
    if d_tot <= 1e-9:
        raise ZeroBaseline("robot is already at the goal")

    obs_arr = None
    tree = None
    if obstacles is not None and len(obstacles):
        obs_arr = np.asarray(obstacles, dtype=np.float64)
        tree = cKDTree(obs_arr)

    def batch_objective(Z: np.ndarray) -> np.ndarray:
        xs, ys = _rollout_batch(robot, Z, cfg)
        d_goal = np.hypot(xs - goal_xy[0], ys - goal_xy[1])
        j_goal = np.sum(d_goal, axis=1) / d_tot
        if tree is not None:
            d_min, _ = tree.query(np.stack([xs.ravel(), ys.ravel()], axis=1))
            terms = _obstacle_terms(d_min.reshape(xs.shape), cfg)
            j_obs = np.sum(terms, axis=1)
        else:
            j_obs = np.zeros(Z.shape[0])
        u, v, front = project_points_clamped(cam, robot, xs.ravel(), ys.ravel())
        c = costmap_mod.sample_many(cm, u, v) * front
        d_here = np.hypot(xs - robot.x, ys - robot.y)
        contrib = c.reshape(xs.shape) * np.exp(-cfg.lam * d_here)
        j_behav = contrib.max(axis=1) if cfg.behav_aggregate == "max" else contrib.sum(axis=1)
        return cfg.w_goal * j_goal + cfg.w_obs * j_obs + cfg.w_behav * j_behav

    k1, k2, dt = cfg.k1, cfg.k2, cfg.dt

    def objective(z: np.ndarray) -> float:
        # scalar twin of batch_objective: local refinement calls this once
        # per candidate, where per-step numpy overhead would dominate
        r, th, de, vm = (float(z[0]), float(z[1]), float(z[2]), float(z[3]))
        bearing0 = robot.heading - de
        tx = robot.x + r * math.cos(bearing0)
        ty = robot.y + r * math.sin(bearing0)
        th_t = bearing0 + th
        x, y, h = robot.x, robot.y, robot.heading
        pts_x: list[float] = []
        pts_y: list[float] = []
        for _ in range(cfg.horizon_steps):
            dx, dy = tx - x, ty - y
            dist = math.hypot(dx, dy)
            if dist < STOP_RADIUS:
                # parked: repeat the pose so sums cover the full horizon
                n_left = cfg.horizon_steps - len(pts_x)
                pts_x.extend([x] * n_left)
                pts_y.extend([y] * n_left)
                break
            bearing = math.atan2(dy, dx)
            delta = wrap(bearing - h)
            theta = wrap(bearing - th_t)
            omega = (vm / dist) * (
                k2 * (delta - math.atan(-k1 * theta))
                + (1.0 + k1) / (1.0 + k1 * k1 * theta * theta) * math.sin(delta)
            )
            if abs(omega) < 1e-9:
                x += vm * dt * math.cos(h)
                y += vm * dt * math.sin(h)
            else:
                h2 = h + omega * dt
                radius = vm / omega
                x += radius * (math.sin(h2) - math.sin(h))
                y += radius * (math.cos(h) - math.cos(h2))
                h = h2
            pts_x.append(x)
            pts_y.append(y)
        if not pts_x:
            return 0.0
        xs = np.asarray(pts_x)
        ys = np.asarray(pts_y)
        j_goal = float(np.sum(np.hypot(xs - goal_xy[0], ys - goal_xy[1]))) / d_tot
        if tree is not None:
            d_min, _ = tree.query(np.stack([xs, ys], axis=1))
            j_obs = float(np.sum(_obstacle_terms(d_min, cfg)))
        else:
            j_obs = 0.0
        u, v, front = project_points_clamped(cam, robot, xs, ys)
        c = costmap_mod.sample_many(cm, u, v) * front
        contrib = c * np.exp(-cfg.lam * np.hypot(xs - robot.x, ys - robot.y))
        j_behav = float(contrib.max()) if cfg.behav_aggregate == "max" else float(np.sum(contrib))
        return cfg.w_goal * j_goal + cfg.w_obs * j_obs + cfg.w_behav * j_behav

    z_best, j_best = optimize(objective, capped, seed, cfg.opt_budget, batch_objective=batch_objective)

    traj = rollout(robot, z_best, cfg)
    terms = (
        goal_cost(traj, goal_xy, d_tot),
        obstacle_cost(traj, obs_arr, cfg),
        behavior_cost(traj, cm, cam, robot, cfg),
    )
    v_cmd = min(z_best.v_max, capped.upper.v_max)
    # first-step angles of the chosen rollout: line of sight to the virtual
    # target starts at -delta relative to heading, target heading at -theta
    omega_cmd = control_law(EgocentricGoal(z_best.r, -z_best.theta, -z_best.delta), v_cmd, cfg.k1, cfg.k2)
    gait = instruction_mod.gait_caution_flag(bundle.behav_actions) if bundle is not None else False
    return PlanResult(
        command=(v_cmd, omega_cmd),
        params=z_best,
        trajectory=traj,
        cost_terms=terms,
        total_cost=total_cost(terms, cfg),
        max_c=max_c,
        capped_v_max=capped.upper.v_max,
        gait_caution=gait,
    )
