"""Shared environment plumbing: config, reward, observation scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

ENV_IDS = (
    "hand_reach",
    "hand_v0",
    "hand_v1",
    "hand_v2",
    "hand_wall_v0",
    "hand_wall_v1",
    "hand_wall_v2",
    "robot_reach",
    "robot_v0",
    "robot_v1",
    "robot_v2",
    "sticky_line",
)

HAND_VEL_MAX = 1.0
JOINT_VEL_MAX = math.pi
# used to scale ball and end-effector velocities into roughly [-1, 1]
BALL_VEL_MAX = 2.0
EE_VEL_MAX = 2.0


def is_reach(env_id: str) -> bool:
    return env_id.endswith("_reach")


def default_threshold(env_id: str) -> float:
    if is_reach(env_id):
        return 0.02
    return 0.05


@dataclass
class EnvConfig:
    env_id: str = "hand_v1"
    max_steps: int = 50
    steps_per_second: float = 20.0
    reward_threshold: Optional[float] = None
    screen: tuple = (500, 500)
    # pixels per meter; 50 px/m makes the 500 px screen 10 m wide
    scale: float = 50.0
    hand_half: str = "left"
    wall_x: float = 0.55
    wall_height: float = 0.45
    wall_thickness: float = 0.02
    grab_tolerance: float = 0.0
    held_start_prob: float = 0.5
    terminate_threshold: float = 0.5
    frame_dir: Optional[str] = None

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise ValueError(f"unknown env_id {self.env_id!r}")
        if self.reward_threshold is None:
            self.reward_threshold = default_threshold(self.env_id)
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.reward_threshold <= 0:
            raise ValueError("reward_threshold must be positive")
        if self.steps_per_second <= 0:
            raise ValueError("steps_per_second must be positive")
        if self.hand_half not in ("left", "right"):
            raise ValueError("hand_half must be 'left' or 'right'")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_second


@dataclass
class GoalObservation:
    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray

    def copy(self) -> "GoalObservation":
        return GoalObservation(
            self.observation.copy(), self.achieved_goal.copy(), self.desired_goal.copy()
        )


@dataclass(frozen=True)
class Rect:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def sample(self, rng) -> np.ndarray:
        return np.array([rng.uniform(self.x_lo, self.x_hi), rng.uniform(self.y_lo, self.y_hi)])

    @property
    def area(self) -> float:
        return max(self.x_hi - self.x_lo, 0.0) * max(self.y_hi - self.y_lo, 0.0)

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_lo + self.x_hi) / 2, (self.y_lo + self.y_hi) / 2])


def compute_reward(achieved, desired, threshold: float):
    """0 where the goal distance is strictly below ``threshold``, else -1.

    Accepts single goals or stacked (..., 2) arrays.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d = np.linalg.norm(np.asarray(achieved, dtype=float) - np.asarray(desired, dtype=float), axis=-1)
    r = np.where(d < threshold, 0.0, -1.0)
    return float(r) if r.ndim == 0 else r


# per-entry scaling kinds for each raw layout
_HAND_BASE = ["pos", "pos", "hvel", "hvel", "flag"]
_BALL = ["pos", "pos", "bvel", "bvel"]
_ROBOT_BASE = ["angle", "angle", "pos", "pos", "jvel", "jvel", "evel", "evel", "flag"]

RAW_LAYOUTS = {
    "hand_reach": _HAND_BASE,
    "hand": _HAND_BASE + _BALL,
    "robot_reach": _ROBOT_BASE,
    "robot": _ROBOT_BASE + _BALL,
    "sticky_line": ["pos", "flag"],
}


def raw_layout(env_id: str) -> list:
    if env_id in RAW_LAYOUTS:
        return RAW_LAYOUTS[env_id]
    if env_id.startswith("hand"):
        return RAW_LAYOUTS["hand"]
    if env_id.startswith("robot"):
        return RAW_LAYOUTS["robot"]
    raise ValueError(f"unknown env_id {env_id!r}")


def scale_observation(raw, env_id: str, extent: float = 1.0) -> np.ndarray:
    """Map a raw observation to the network's input ranges.

    Angles become (cos, sin) pairs, so robot layouts grow by one entry per joint.
    """
    raw = np.asarray(raw, dtype=float)
    kinds = raw_layout(env_id)
    if raw.shape != (len(kinds),):
        raise ValueError(f"{env_id} expects {len(kinds)} raw entries, got {raw.shape}")
    out = []
    angles = [raw[i] for i, k in enumerate(kinds) if k == "angle"]
    for i, k in enumerate(kinds):
        v = raw[i]
        if k == "angle":
            # all joint pairs go where the first angle sat
            if i == kinds.index("angle"):
                for a in angles:
                    out.extend([math.cos(a), math.sin(a)])
        elif k == "pos":
            out.append(v / extent)
        elif k == "hvel":
            out.append(v / HAND_VEL_MAX)
        elif k == "bvel":
            out.append(v / BALL_VEL_MAX)
        elif k == "jvel":
            out.append(v / JOINT_VEL_MAX)
        elif k == "evel":
            out.append(v / EE_VEL_MAX)
        else:
            out.append(1.0 if v > 0.5 else 0.0)
    return np.array(out)


def scaled_dim(env_id: str) -> int:
    kinds = raw_layout(env_id)
    return len(kinds) + kinds.count("angle")


@dataclass
class ActionBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.low)

    def clip(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=float)
        if a.shape != self.low.shape:
            raise ValueError(f"action must have shape {self.low.shape}, got {a.shape}")
        return np.clip(a, self.low, self.high)

    def sample(self, rng) -> np.ndarray:
        return rng.uniform(self.low, self.high)

