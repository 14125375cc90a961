"""Layered sub-tasks for sequential manipulation (reach the ball, then throw it).

Every layer reads from the env's full observation||goal vector. A layer's
network input keeps the full layout: the entries it uses stay at their own
positions and every other slot is zero, so later layers only reveal new slots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .ddpg import DdpgAgent
from .envs.core import GoalObservation, Rect
from .envs.games import HAND_THROW_GOALS, HAND_WALL_GOALS, ROBOT_THROW_GOALS, make_env
from .envs.physics import BALL_RADIUS
from .her import VirtualGoalGrid
from .nn import EXPANSION_SCALE
from .replay import PriorityBuffer

CRITIC_MODES = tuple(EXPANSION_SCALE)


@dataclass(frozen=True)
class SubTaskSpec:
    name: str
    obs_idx: tuple
    achieved_idx: tuple
    desired_idx: tuple
    reward_threshold: float
    final_width: int
    goal_region: Rect

    def __post_init__(self):
        if set(self.achieved_idx) & set(self.desired_idx):
            raise ValueError("achieved and desired indices overlap")
        if max(self.input_slots) >= self.final_width:
            raise ValueError("index beyond the final input width")

    @property
    def input_slots(self) -> tuple:
        return tuple(self.obs_idx) + tuple(self.desired_idx)

    @property
    def padded_slots(self) -> tuple:
        used = set(self.input_slots)
        return tuple(i for i in range(self.final_width) if i not in used)

    @property
    def pad_width(self) -> int:
        return len(self.padded_slots)


def get_curriculum(task_id: str) -> list:
    """Two layers: reach the ball with the gripper, then bring the ball to the target."""
    if task_id in ("hand_v1", "hand_wall_v1"):
        # hand x, y, vx, vy, closed | ball x, y, vx, vy | goal x, y
        region = HAND_WALL_GOALS if task_id == "hand_wall_v1" else HAND_THROW_GOALS
        floor = Rect(BALL_RADIUS, 0.5, 0.0, 2 * BALL_RADIUS)
        return [
            SubTaskSpec("reach", tuple(range(5)), (0, 1), (5, 6), BALL_RADIUS, 11, floor),
            SubTaskSpec("throw", tuple(range(9)), (5, 6), (9, 10), 0.05, 11, region),
        ]
    if task_id == "robot_v1":
        # cos/sin of both joints | tip x, y | joint rates | tip vx, vy | closed | ball x, y, vx, vy | goal x, y
        sector = make_env("robot_reach").goal_region
        return [
            SubTaskSpec("reach", tuple(range(11)), (4, 5), (11, 12), BALL_RADIUS, 17, sector),
            SubTaskSpec("throw", tuple(range(15)), (11, 12), (15, 16), 0.05, 17, ROBOT_THROW_GOALS),
        ]
    raise ValueError(f"no curriculum for {task_id!r}")


def full_vector(obs: GoalObservation) -> np.ndarray:
    return np.concatenate([obs.observation, obs.desired_goal])


def state_to_obs(spec: SubTaskSpec, full) -> GoalObservation:
    full = np.asarray(full, dtype=float)
    if full.shape[-1] != spec.final_width:
        raise IndexError(f"expected width {spec.final_width}, got {full.shape[-1]}")
    return GoalObservation(
        full[..., list(spec.obs_idx)], full[..., list(spec.achieved_idx)], full[..., list(spec.desired_idx)]
    )


def pad_input(spec: SubTaskSpec, layer_vec, final_width: int = None) -> np.ndarray:
    """Scatter a layer's obs||goal into the final layout, zeros elsewhere.

    A vector that already has the final width is projected onto the layer's
    slots, so padding twice equals padding once.
    """
    width = spec.final_width if final_width is None else final_width
    v = np.asarray(layer_vec, dtype=float)
    slots = list(spec.input_slots)
    out = np.zeros(v.shape[:-1] + (width,))
    if v.shape[-1] == width:
        out[..., slots] = v[..., slots]
    elif v.shape[-1] == len(slots):
        out[..., slots] = v
    else:
        raise ValueError(f"layer vector of width {v.shape[-1]} does not fit {len(slots)} slots")
    return out


def layer_input_fn(spec: SubTaskSpec):
    def input_fn(state, goal):
        return pad_input(spec, np.concatenate([state, goal], axis=-1))

    return input_fn


def learned_task(history, c: float = 0.9, k_window: int = 20) -> bool:
    h = list(history)
    if len(h) < k_window:
        return False
    return float(np.mean(h[-k_window:])) >= c


class CurriculumState:
    def __init__(self, specs, c: float = 0.9, k_window: int = 20):
        if not 0 < c <= 1:
            raise ValueError("c must lie in (0, 1]")
        if k_window < 1:
            raise ValueError("k_window must be >= 1")
        self.specs = list(specs)
        self.layer = 0
        self.c = c
        self.k_window = k_window
        self.history = deque(maxlen=k_window)

    @property
    def spec(self) -> SubTaskSpec:
        return self.specs[self.layer]

    @property
    def is_last(self) -> bool:
        return self.layer == len(self.specs) - 1

    def record(self, success: bool) -> None:
        self.history.append(1.0 if success else 0.0)

    def ready(self) -> bool:
        return not self.is_last and learned_task(self.history, self.c, self.k_window)


def mask_unrevealed(agent: DdpgAgent, spec: SubTaskSpec) -> None:
    """Zero the first-layer weights of slots the layer never fills, in both nets and targets."""
    rows = list(spec.padded_slots)
    for net in (agent.actor, agent.critic, agent.target_actor, agent.target_critic):
        net.W[0][rows, :] = 0.0
        net.version += 1
    agent.input_fn = layer_input_fn(spec)


def advance_layer(agent: DdpgAgent, buffer: PriorityBuffer, state: CurriculumState, critic_mode: str = "reset",
                  rng=None, grid_kwargs=None):
    """Move to the next layer: widen the critic's view, empty the buffer, fresh goal grid.

    Actor weights are left untouched; their rows for new slots are still zero.
    Returns (agent, emptied buffer, new grid).
    """
    if critic_mode not in CRITIC_MODES:
        raise ValueError(f"critic_mode must be one of {CRITIC_MODES}")
    if state.is_last:
        raise ValueError("already at the last layer")
    prev, nxt = state.spec, state.specs[state.layer + 1]
    new_rows = sorted(set(nxt.input_slots) - set(prev.input_slots))
    alpha = EXPANSION_SCALE[critic_mode]
    for net in (agent.critic, agent.target_critic):
        if alpha == 0.0:
            net.W[0][new_rows, :] = 0.0
        else:
            lim = 1.0 / np.sqrt(net.sizes[0])
            net.W[0][new_rows, :] = alpha * rng.uniform(-lim, lim, (len(new_rows), net.sizes[1]))
        # clear optimizer history for the new rows
        m_rows = net.m[: net.W[0].size].reshape(net.W[0].shape)
        v_rows = net.v[: net.W[0].size].reshape(net.W[0].shape)
        m_rows[new_rows, :] = 0.0
        v_rows[new_rows, :] = 0.0
        net.version += 1
    # target critic starts from the online one so the new rows agree
    agent.target_critic.W[0][new_rows, :] = agent.critic.W[0][new_rows, :]
    buffer.clear()
    state.layer += 1
    state.history.clear()
    agent.input_fn = layer_input_fn(nxt)
    grid = VirtualGoalGrid(nxt.goal_region, **dict(grid_kwargs or {}))
    return agent, buffer, grid
