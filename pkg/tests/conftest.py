"""Shared builders: a small camera, simple worlds, and a fast mini scenario
for the runner/CLI tests (tiny image, low optimizer budget, short horizon)."""

import copy

import numpy as np
import pytest

from behavnav.geometry import CameraModel
from behavnav.scenario import parse_scenario
from behavnav.simulator import Landmark, TerrainRegion, World


def small_camera() -> CameraModel:
    return CameraModel(
        fx=45.0, fy=45.0, cx=40.0, cy=30.0, width=80, height=60,
        mount_height=0.4, mount_pitch=0.35, mount_offset=0.1,
    )


@pytest.fixture
def cam():
    return small_camera()


def flat_world(label: str = "grass", bounds=(-5.0, -5.0, 15.0, 5.0)) -> World:
    # region far larger than the bounds so every visible ground pixel,
    # including the long-range rows just under the horizon, lands on it
    region = TerrainRegion(
        label=label,
        polygon=np.array([[-1e4, -1e4], [1e4, -1e4], [1e4, 1e4], [-1e4, 1e4]]),
    )
    return World(bounds=bounds, terrain=[region], landmarks=[Landmark("cone", (3.0, 0.0))])


MINI_RAW = {
    "version": 1,
    "name": "mini",
    "instruction": "go to the blue crate and stay on the mat",
    "world": {
        "bounds": [-2.0, -3.0, 8.0, 3.0],
        "default_label": "pavement",
        "terrain": [
            {"label": "mat", "polygon": [[-2.0, -3.0], [8.0, -3.0], [8.0, 3.0], [-2.0, 3.0]], "order": 0}
        ],
        "landmarks": [{"text": "blue crate", "position": [3.0, 0.0]}],
    },
    "start": [0.0, 0.0, 0.0],
    "camera": {
        "fx": 45.0, "fy": 45.0, "cx": 40.0, "cy": 30.0, "width": 80, "height": 60,
        "mount_height": 0.4, "mount_pitch": 0.35, "mount_offset": 0.1,
    },
    "planner": {"opt_budget": 16, "horizon_steps": 12},
    "seeds": {"sim": 1, "optimizer": 2, "noise": 3},
    "timeout_s": 12.0,
    "reference_path": [[0.0, 0.0], [3.0, 0.0]],
}


def mini_raw(**top_level) -> dict:
    raw = copy.deepcopy(MINI_RAW)
    raw.update(top_level)
    return raw


@pytest.fixture
def mini_scenario():
    return parse_scenario(mini_raw())


@pytest.fixture(scope="session")
def mini_run():
    """One completed mini run shared by log/CSV/replay tests."""
    from behavnav.runner import run_scenario

    scn = parse_scenario(copy.deepcopy(MINI_RAW))
    return run_scenario(scn)
