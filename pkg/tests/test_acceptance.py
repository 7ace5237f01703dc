"""Acceptance suite: one test per shipped guarantee, each printing a single
PASS/FAIL line (visible with pytest -s; the test verdicts mirror them)."""

import math
import time

import numpy as np
import pytest

from behavnav.costmap import CostMap, SegmentationMap, fuse, target_cost
from behavnav.geometry import (
    AboveHorizon,
    CameraModel,
    EgocentricGoal,
    OutOfView,
    Pose2D,
    ground_to_pixel,
    pixel_to_ground,
)
from behavnav.metrics import frechet
from behavnav.planner import ParamBounds, control_law, optimize
from behavnav.runner import run_scenario
from behavnav.scenario import load_scenario

SHIPPED = ["stop-gesture", "terrain-fork", "sidewalk-pedestrians", "stairs-caution", "lawn-landmarks"]

GESTURE_WINDOW = (3.0, 9.0)  # stop gesture actor's active window


def report(num: int, ok: bool, detail: str):
    line = f"AC{num}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def shipped_runs():
    return {name: run_scenario(load_scenario(name)) for name in SHIPPED}


def test_ac01_control_law_matches_hand_computation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    errs = []
    for _ in range(25):
        r = rng.uniform(0.2, 9.0)
        th = rng.uniform(-math.pi, math.pi)
        de = rng.uniform(-math.pi, math.pi)
        v = rng.uniform(0.05, 2.0)
        k1 = rng.uniform(0.3, 3.0)
        k2 = rng.uniform(0.3, 6.0)
        want = (v / r) * (k2 * (de - math.atan(-k1 * th))
                          + (1.0 + k1) / (1.0 + (k1 * th) ** 2) * math.sin(de))
        errs.append(abs(control_law(EgocentricGoal(r, th, de), v, k1, k2) - want))
    zero_ok = all(
        control_law(EgocentricGoal(r, 0.0, 0.0), v, k1, k2) == 0.0
        for r, v, k1, k2 in ((1.0, 1.0, 1.0, 3.0), (4.0, 0.3, 2.0, 1.0), (0.7, 2.0, 0.5, 4.0))
    )
    dt = time.perf_counter() - t0
    report(1, max(errs) <= 1e-9 and zero_ok and dt < 1.0,
           f"25 tuples, max err {max(errs):.2e}, aligned goal exactly 0: {zero_ok}, {dt:.3f}s")


def test_ac02_fusion_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    ok = True
    for _ in range(1000):
        a, b, c = (CostMap(rng.uniform(0.0, 1.0, size=(7, 9))) for _ in range(3))
        f_abc = fuse([a, b, c]).values
        ok &= np.array_equal(fuse([a, b]).values, fuse([b, a]).values)
        ok &= np.array_equal(fuse([a, a]).values, a.values)
        ok &= bool(np.all(f_abc >= a.values) and np.all(f_abc >= b.values) and np.all(f_abc >= c.values))
        ok &= bool(np.all(f_abc >= 0.0) and np.all(f_abc <= 1.0))
        if not ok:
            break
    zero_ok = all(
        np.all(target_cost(SegmentationMap("x", rng.uniform(0, 1, size=(7, 9))), 1.0).values == 0.0)
        for _ in range(50)
    )
    dt = time.perf_counter() - t0
    report(2, ok and zero_ok and dt < 10.0,
           f"1000 triples, fully desirable target zeroes the map: {zero_ok}, {dt:.3f}s")


def test_ac03_stop_gesture_halts_within_one_tick(shipped_runs):
    _, header, records = shipped_runs["stop-gesture"]
    v_nominal, dt = 1.0, header["dt"]
    first = next((i for i, r in enumerate(records) if r["max_c"] >= 0.8), None)
    assert first is not None and first + 1 < len(records)
    r0 = records[first]
    stopped = r0["cmd"][0] == 0.0  # halted on the same tick the cost appears
    disp = math.dist(r0["pose"][:2], records[first + 1]["pose"][:2])
    report(3, r0["max_c"] >= 1.0 - 1e-9 and stopped and disp < v_nominal * dt,
           f"tick {first} (t={r0['t']}): max_c={r0['max_c']:.9f}, v={r0['cmd'][0]}, "
           f"next-tick displacement {disp:.2e} m < {v_nominal * dt} m")


def _ac4_objectives():
    c1, s1 = np.array([3.2, 0.4, -0.7, 0.6]), np.array([2.0, 1.0, 1.0, 0.5])

    def f1(z):
        return 1.0 + np.sum(((np.asarray(z) - c1) / s1) ** 2, axis=-1)

    c2, w2 = np.array([1.1, -1.2, 0.9, 0.25]), np.array([0.8, 1.1, 0.7, 1.3])

    def f2(z):
        d = np.asarray(z) - c2
        return 1.0 + np.sum(w2 * (np.sqrt(0.01 + d * d) - 0.1), axis=-1)

    def f3(z):
        z = np.asarray(z)
        return (2.0 + 0.5 * np.sin(z[..., 0]) * np.cos(z[..., 1])
                + 0.25 * np.cos(2.0 * z[..., 2]) + (z[..., 3] - 0.3) ** 2)

    c4, s4 = np.array([4.5, -0.3, 0.2, 0.8]), np.array([1.5, 0.8, 0.9, 0.6])

    def f4(z):
        return 2.0 - np.exp(-np.sum(((np.asarray(z) - c4) / s4) ** 2, axis=-1))

    def f5(z):
        z = np.asarray(z)
        return (1.0 + 4.0 * (z[..., 1] - 0.2 * (z[..., 0] - 3.0)) ** 2
                + 0.5 * (z[..., 0] - 2.5) ** 2 + (z[..., 2] + 0.4) ** 2
                + 3.0 * (z[..., 3] - 0.7) ** 2)

    return [f1, f2, f3, f4, f5]


def test_ac04_optimizer_within_one_percent_of_dense_grid():
    t0 = time.perf_counter()
    bounds = ParamBounds()
    lo, hi = bounds.arrays()
    axes = [np.linspace(lo[k], hi[k], 41) for k in range(4)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    worst = -math.inf
    for fi, f in enumerate(_ac4_objectives(), start=1):
        j_grid = float(np.min(f(grid)))
        for seed in (0, 1, 2):
            _, j_opt = optimize(f, bounds, seed=seed, budget=512, batch_objective=f)
            rel = (j_opt - j_grid) / j_grid
            worst = max(worst, rel)
    dt = time.perf_counter() - t0
    report(4, worst <= 0.01 and dt < 120.0,
           f"5 objectives x 3 seeds at budget 512 vs 41^4 grid, worst rel gap {worst:+.2e}, {dt:.1f}s")


def test_ac05_behavior_term_ablation_on_terrain_fork():
    t0 = time.perf_counter()
    passed, details = 0, []
    for n in range(10):
        seeds = [f"seeds.sim={n}", f"seeds.optimizer={n + 1}", f"seeds.noise={n + 2}"]
        full, _, _ = run_scenario(load_scenario("terrain-fork", seeds))
        abl, _, _ = run_scenario(load_scenario("terrain-fork", seeds + ["planner.w_behav=0"]))
        ok = (full.bfa_pct >= 90.0
              and full.frechet_m < abl.frechet_m
              and full.bfa_pct - abl.bfa_pct >= 20.0)
        passed += ok
        details.append(f"seed{n}:{'ok' if ok else 'FAIL'}(bfa {full.bfa_pct:.0f}/{abl.bfa_pct:.0f}, "
                       f"fr {full.frechet_m:.2f}/{abl.frechet_m:.2f})")
    dt = time.perf_counter() - t0
    report(5, passed >= 9 and dt < 300.0, f"{passed}/10 seeds, {dt:.1f}s; " + " ".join(details))


def _frechet_bruteforce(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    n, m = d.shape
    best = [math.inf]

    def walk(i, j, cur):
        cur = max(cur, d[i, j])
        if cur >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cur
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cur)
        if i + 1 < n:
            walk(i + 1, j, cur)
        if j + 1 < m:
            walk(i, j + 1, cur)

    walk(0, 0, 0.0)
    return best[0]


def test_ac06_frechet_matches_exhaustive_couplings():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(2, 9))
        a = rng.uniform(-5.0, 5.0, size=(n, 2))
        b = rng.uniform(-5.0, 5.0, size=(m, 2))
        worst = max(worst, abs(frechet(a, b) - _frechet_bruteforce(a, b)))
    dt = time.perf_counter() - t0
    report(6, worst <= 1e-12 and dt < 30.0, f"500 pairs of 2..8 points, max |dp - brute| {worst:.1e}, {dt:.1f}s")


def test_ac07_projection_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst, total = 0.0, 0
    for _ in range(10):
        cam = CameraModel(
            fx=float(rng.uniform(60, 400)),
            fy=float(rng.uniform(60, 400)),
            cx=float(rng.uniform(0.4, 0.6)) * 320,
            cy=float(rng.uniform(0.4, 0.6)) * 240,
            width=320, height=240,
            mount_height=float(rng.uniform(0.2, 1.2)),
            mount_pitch=float(rng.uniform(0.25, 1.0)),
            mount_offset=float(rng.uniform(-0.4, 0.4)),
        )
        robot = Pose2D(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)),
                       float(rng.uniform(-math.pi, math.pi)))
        # in-view ground points come from back-projecting random pixels, so
        # the sample adapts to whatever ground band this camera can see
        accepted, tries = 0, 0
        while accepted < 1000 and tries < 50000:
            tries += 1
            pixel = (float(rng.uniform(0, cam.width - 1)), float(rng.uniform(0, cam.height - 1)))
            try:
                pt = pixel_to_ground(cam, robot, pixel)
            except AboveHorizon:
                continue
            if math.dist((robot.x, robot.y), pt) > 100.0:
                continue  # near-horizon rays are ill-conditioned in meters
            try:
                pix2 = ground_to_pixel(cam, robot, pt)
            except OutOfView:
                continue
            back = pixel_to_ground(cam, robot, pix2)
            worst = max(worst, math.dist(pt, back))
            accepted += 1
        total += accepted
    dt = time.perf_counter() - t0
    report(7, total == 10000 and worst < 1e-6 and dt < 5.0,
           f"10 cameras x 1000 in-view points, worst round trip {worst:.2e} m, {dt:.2f}s")


def test_ac08_tick_budget():
    overrides = [
        'world.landmarks=[{"text": "wooden bench", "position": [30.0, -1.8]}]',
        "timeout_s=20",
    ]
    scn = load_scenario("terrain-fork", overrides)
    assert scn.planner.opt_budget == 256
    summary, _, records = run_scenario(scn)
    moved = summary.path_length_m > 5.0  # the planner ran every tick
    report(8, summary.ticks == 200 and moved and summary.mean_tick_wall_ms <= 105.0,
           f"{summary.ticks} ticks at budget 256, mean {summary.mean_tick_wall_ms:.1f} ms/tick "
           f"(limit 105), path {summary.path_length_m:.1f} m")


def test_ac09_identical_seeds_give_bit_identical_logs(tmp_path):
    logs = []
    for sub in ("first", "second"):
        d = tmp_path / sub
        run_scenario(load_scenario("stop-gesture"), out_dir=d)
        logs.append((d / "run_log.jsonl").read_bytes())
    report(9, logs[0] == logs[1] and len(logs[0]) > 0,
           f"two stop-gesture runs, {len(logs[0])} bytes each, identical: {logs[0] == logs[1]}")


def test_ac10_all_scenarios_succeed_with_stop_interval(shipped_runs):
    outcomes = {name: shipped_runs[name][0].success for name in SHIPPED}
    _, _, records = shipped_runs["stop-gesture"]
    lo, hi = GESTURE_WINDOW
    stop_ticks = [r for r in records
                  if r["stop_active"] and r["cmd"][0] == 0.0 and lo <= r["t"] <= hi]
    ok = all(outcomes.values()) and len(stop_ticks) >= 1
    report(10, ok, f"success={outcomes}, full-stop ticks in gesture window: {len(stop_ticks)}")
