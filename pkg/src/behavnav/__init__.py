"""Language-conditioned behavioral navigation.

Natural-language instructions are split into navigation clauses (where to go)
and behavior clauses (how to move). Behavior clauses become per-target
desirability scores, rendered each tick into an egocentric behavioral cost
map from semantic segmentation. A sampling-based horizon optimizer picks
feedback-controller parameters that trade off goal progress, obstacle
clearance, and behavioral cost; a cap on forward speed enforces yield and
stop behaviors. Everything runs against a deterministic 2-D simulator with
oracle perception, or against live/recorded HTTP language and vision
backends.
"""

from .costmap import CostMap, SegmentationMap, fuse, max_cost, sample, target_cost
from .geometry import CameraModel, EgocentricGoal, Pose2D, to_egocentric, wrap
from .instruction import (
    BehaviorRule,
    InstructionBundle,
    decompose_fallback,
    pair_rules,
    score_desirability_fallback,
)
from .landmark import GoalLock, OdomGoal, OracleLandmarkBackend, PixelGoal, update_goal_lock
from .metrics import bfa, frechet, path_length, resample, success
from .planner import (
    ParamBounds,
    PlannerConfig,
    TrajectoryParams,
    apply_velocity_cap,
    control_law,
    plan_step,
    rollout,
)
from .runner import RunSummary, export_csv, read_log, replay_log, run_scenario
from .scenario import InvalidScenario, ScenarioConfig, load_scenario
from .simulator import RobotState, World, lidar_scan, oracle_segment, render_label_image

__version__ = "0.1.0"

__all__ = [
    "BehaviorRule",
    "CameraModel",
    "CostMap",
    "EgocentricGoal",
    "GoalLock",
    "InstructionBundle",
    "InvalidScenario",
    "OdomGoal",
    "OracleLandmarkBackend",
    "ParamBounds",
    "PixelGoal",
    "PlannerConfig",
    "Pose2D",
    "RobotState",
    "RunSummary",
    "ScenarioConfig",
    "SegmentationMap",
    "TrajectoryParams",
    "World",
    "apply_velocity_cap",
    "bfa",
    "control_law",
    "decompose_fallback",
    "export_csv",
    "frechet",
    "fuse",
    "lidar_scan",
    "load_scenario",
    "max_cost",
    "oracle_segment",
    "pair_rules",
    "path_length",
    "plan_step",
    "read_log",
    "render_label_image",
    "replay_log",
    "resample",
    "rollout",
    "run_scenario",
    "sample",
    "score_desirability_fallback",
    "success",
    "target_cost",
    "to_egocentric",
    "update_goal_lock",
    "wrap",
]
