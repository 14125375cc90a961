"""Multi-goal environments: hand and manipulator games plus a 1-D toy line."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import (
    HAND_VEL_MAX,
    JOINT_VEL_MAX,
    ActionBox,
    EnvConfig,
    GoalObservation,
    Rect,
    compute_reward,
    is_reach,
    scale_observation,
)
from .physics import (
    BALL_RADIUS,
    BallState,
    HandState,
    ManipulatorState,
    Wall,
    ball_integrate,
    carry,
    release,
    try_grab,
)

HAND_THROW_GOALS = Rect(0.6, 0.9, 0.1, 0.4)
HAND_WALL_GOALS = Rect(0.65, 0.95, 0.05, 0.35)
ROBOT_THROW_GOALS = Rect(0.65, 0.95, 0.1, 0.4)
# angular sector of the suspended ball around the manipulator base, degrees
BALL_SECTOR = (75.0, 105.0)


class GoalEnv:
    """Common reset/step bookkeeping. Subclasses fill in the game."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.env_id = config.env_id
        self.threshold = float(config.reward_threshold)
        self.dt = config.dt
        self.t = 0
        self.done = True
        self.goal = np.zeros(2)
        self._frames = None
        if config.frame_dir:
            from .frames import FrameWriter

            self._frames = FrameWriter(config.frame_dir, *config.screen)

    # subclass hooks
    action_box: ActionBox
    goal_region: Rect

    def _reset_objects(self, rng) -> None:
        raise NotImplementedError

    def _advance(self, action) -> dict:
        raise NotImplementedError

    def raw_observation(self) -> np.ndarray:
        raise NotImplementedError

    def achieved_goal(self) -> np.ndarray:
        raise NotImplementedError

    def _draw(self, img) -> None:
        pass

    @property
    def action_dim(self) -> int:
        return self.action_box.dim

    @property
    def obs_dim(self) -> int:
        return len(self.observe().observation)

    @property
    def goal_dim(self) -> int:
        return 2

    def observe(self) -> GoalObservation:
        return GoalObservation(
            scale_observation(self.raw_observation(), self.env_id),
            self.achieved_goal().copy(),
            self.goal.copy(),
        )

    def compute_reward(self, achieved, desired):
        return compute_reward(achieved, desired, self.threshold)

    def action_sample(self, rng) -> np.ndarray:
        return self.action_box.sample(rng)

    def reset(self, rng) -> GoalObservation:
        self._reset_objects(rng)
        self.t = 0
        self.done = False
        self._dump_frame()
        return self.observe()

    def step(self, action):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        a = self.action_box.clip(action)
        info = self._advance(a)
        self.t += 1
        obs = self.observe()
        reward = self.compute_reward(obs.achieved_goal, obs.desired_goal)
        success = reward == 0.0
        self.done = success or self.t >= self.config.max_steps
        info["is_success"] = success
        info["step"] = self.t
        self._dump_frame()
        return obs, reward, self.done, info

    def _dump_frame(self) -> None:
        if self._frames is None:
            return
        img = self._frames.blank()
        self._draw(img)
        r = self.threshold
        self._frames.disk(img, self.goal, r, (0, 0, 0))
        self._frames.write(img)


def _decode_close(value: float) -> bool:
    return value > 0.0


class _HolderGame(GoalEnv):
    """Shared grasp/release/ball step order for hand and manipulator games."""

    holder = None
    ball: Optional[BallState] = None
    wall: Optional[Wall] = None

    def _advance(self, a) -> dict:
        holder = self.holder
        close = _decode_close(a[-1])
        info = {"grabbed": False, "released": False, "bounces": []}
        was_close = holder.is_close
        # open command lets go with the velocity the holder had so far
        if was_close and not close and holder.held_ball is not None:
            release(holder)
            info["released"] = True
        holder.is_close = close
        self._move_holder(a[:-1])
        ball = self.ball
        if ball is None:
            return info
        if close and not was_close:
            info["grabbed"] = try_grab(holder, ball, self.config.grab_tolerance)
        if holder.held_ball is not None:
            carry(holder, ball)
        else:
            new = ball_integrate(ball, self.dt, wall=self.wall)
            self.ball = new
            info["bounces"] = list(new.bounces)
        return info

    def _move_holder(self, command) -> None:
        raise NotImplementedError

    def _hold_ball_from_start(self) -> None:
        self.holder.is_close = True
        self.ball.is_held = True
        self.holder.held_ball = self.ball
        carry(self.holder, self.ball)

    def _variant_held(self, rng) -> bool:
        if self.env_id.endswith("_v0"):
            return True
        if self.env_id.endswith("_v2"):
            return bool(rng.random() < self.config.held_start_prob)
        return False


class HandGame(_HolderGame):
    """hand_reach, hand_v*, hand_wall_v*."""

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        r = BALL_RADIUS
        if config.hand_half == "left":
            self.hand_region = Rect(r, 0.5, r, 1.0 - r)
        else:
            self.hand_region = Rect(0.5, 1.0 - r, r, 1.0 - r)
        self.action_box = ActionBox([-HAND_VEL_MAX, -HAND_VEL_MAX, -1.0], [HAND_VEL_MAX, HAND_VEL_MAX, 1.0])
        self.reach = is_reach(config.env_id)
        if config.env_id.startswith("hand_wall"):
            self.wall = Wall(config.wall_x, config.wall_height, config.wall_thickness)
            self.goal_region = HAND_WALL_GOALS
        elif self.reach:
            # goals are floor balls; a thin band keeps the region's area positive
            self.goal_region = Rect(self.hand_region.x_lo, self.hand_region.x_hi, 0.0, 2 * r)
        else:
            self.goal_region = HAND_THROW_GOALS
        if config.hand_half == "right" and not self.reach:
            self.goal_region = Rect(
                1.0 - self.goal_region.x_hi, 1.0 - self.goal_region.x_lo,
                self.goal_region.y_lo, self.goal_region.y_hi,
            )

    def _floor_ball(self, rng) -> BallState:
        x = rng.uniform(self.hand_region.x_lo, self.hand_region.x_hi)
        return BallState(pos=[x, BALL_RADIUS], vel=[0.0, 0.0], on_ground=True)

    def _reset_objects(self, rng) -> None:
        hr = self.hand_region
        self.holder = HandState(pos=hr.sample(rng), vel=[0.0, 0.0], bounds=(hr.x_lo, hr.x_hi, hr.y_lo, hr.y_hi))
        if self.reach:
            # the ball only marks the goal
            self.ball = None
            self.goal = self._floor_ball(rng).pos.copy()
            return
        self.ball = self._floor_ball(rng)
        if self._variant_held(rng):
            self._hold_ball_from_start()
        self.goal = self.goal_region.sample(rng)

    def _move_holder(self, command) -> None:
        self.holder.move(command, self.dt)

    def raw_observation(self) -> np.ndarray:
        h = self.holder
        base = [h.pos[0], h.pos[1], h.vel[0], h.vel[1], float(h.is_close)]
        if self.reach:
            return np.array(base)
        b = self.ball
        return np.array(base + [b.pos[0], b.pos[1], b.vel[0], b.vel[1]])

    def achieved_goal(self) -> np.ndarray:
        if self.reach:
            return self.holder.pos
        return self.ball.pos

    def _draw(self, img) -> None:
        fw = self._frames
        if self.wall is not None:
            w = self.wall
            fw.box(img, w.left, w.right, 0.0, w.height, (120, 120, 120))
        if self.ball is not None:
            fw.disk(img, self.ball.pos, self.ball.radius, (200, 30, 30))
        color = (30, 30, 200) if self.holder.is_close else (120, 160, 255)
        fw.disk(img, self.holder.pos, 0.03, color)


class RobotGame(_HolderGame):
    """robot_reach and robot_v*: a two-link arm with a velocity-controlled joint pair."""

    base = np.array([0.33, 0.5])
    links = np.array([0.3, 0.3])

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.action_box = ActionBox([-JOINT_VEL_MAX, -JOINT_VEL_MAX, -1.0], [JOINT_VEL_MAX, JOINT_VEL_MAX, 1.0])
        self.reach = is_reach(config.env_id)
        if self.reach:
            self.goal_region = self._sector_bounds()
        else:
            self.goal_region = ROBOT_THROW_GOALS

    def _radius_range(self, angle: float):
        length = float(self.links.sum())
        lo = 0.75 * length
        # keep the suspended ball fully on screen
        s = math.sin(angle)
        hi = length if s <= 0 else min(length, (1.0 - BALL_RADIUS - self.base[1]) / s)
        return lo, max(hi, lo)

    def _sector_bounds(self) -> Rect:
        angles = np.radians(np.linspace(*BALL_SECTOR, 61))
        pts = []
        for a in angles:
            for rad in self._radius_range(a):
                pts.append(self.base + rad * np.array([math.cos(a), math.sin(a)]))
        pts = np.array(pts)
        return Rect(*(float(v) for v in (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())))

    def _sector_ball(self, rng) -> BallState:
        a = math.radians(rng.uniform(*BALL_SECTOR))
        lo, hi = self._radius_range(a)
        rad = rng.uniform(lo, hi)
        pos = self.base + rad * np.array([math.cos(a), math.sin(a)])
        return BallState(pos=pos, vel=[0.0, 0.0], suspended=True)

    def _reset_objects(self, rng) -> None:
        theta = rng.uniform(math.pi, 2 * math.pi, size=2)
        self.holder = ManipulatorState(theta=theta, theta_dot=np.zeros(2), base=self.base, link_lengths=self.links)
        if self.reach:
            self.ball = None
            self.goal = self._sector_ball(rng).pos.copy()
            return
        self.ball = self._sector_ball(rng)
        if self._variant_held(rng):
            self._hold_ball_from_start()
        self.goal = self.goal_region.sample(rng)

    def _move_holder(self, command) -> None:
        self.holder.move(command, self.dt)

    def raw_observation(self) -> np.ndarray:
        m = self.holder
        tip, tip_vel = m.grip_point, m.grip_velocity
        base = [m.theta[0], m.theta[1], tip[0], tip[1], m.theta_dot[0], m.theta_dot[1],
                tip_vel[0], tip_vel[1], float(m.is_close)]
        if self.reach:
            return np.array(base)
        b = self.ball
        return np.array(base + [b.pos[0], b.pos[1], b.vel[0], b.vel[1]])

    def achieved_goal(self) -> np.ndarray:
        if self.reach:
            return self.holder.grip_point
        return self.ball.pos

    def _draw(self, img) -> None:
        fw = self._frames
        m = self.holder
        joint = m.base.copy()
        cum = 0.0
        for th, ln in zip(m.theta, m.link_lengths):
            cum += th
            nxt = joint + ln * np.array([math.cos(cum), math.sin(cum)])
            fw.segment(img, joint, nxt, 0.01, (60, 60, 60))
            joint = nxt
        fw.disk(img, m.base, 0.015, (0, 0, 0))
        if self.ball is not None:
            fw.disk(img, self.ball.pos, self.ball.radius, (200, 30, 30))
        fw.disk(img, joint, 0.012, (220, 0, 0) if m.is_close else (255, 170, 170))


class StickyLine(GoalEnv):
    """1-D point on [0, 1] that can choose to freeze in place for the rest of the episode.

    Actions are (velocity, terminate); terminate fires when its component
    exceeds ``config.terminate_threshold``. Once stuck, the agent's position
    never changes, so hindsight goals taken after that point are achieved for
    free. Observation is (x, stuck flag); goals are (x, 0).
    """

    # goals sit on y = 0; a thin band gives the goal grid a positive area
    goal_region = Rect(0.0, 1.0, 0.0, 0.05)

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.action_box = ActionBox([-1.0, -1.0], [1.0, 1.0])
        self.x = 0.0
        self.stuck = False

    def _reset_objects(self, rng) -> None:
        self.x = float(rng.uniform(0.0, 1.0))
        self.stuck = False
        self.goal = np.array([float(rng.uniform(0.0, 1.0)), 0.0])

    def _advance(self, a) -> dict:
        info = {"terminated_in_place": False}
        if self.stuck:
            return info
        if a[1] > self.config.terminate_threshold:
            self.stuck = True
            info["terminated_in_place"] = True
            return info
        self.x = float(np.clip(self.x + a[0] * self.dt, 0.0, 1.0))
        return info

    def raw_observation(self) -> np.ndarray:
        return np.array([self.x, float(self.stuck)])

    def achieved_goal(self) -> np.ndarray:
        return np.array([self.x, 0.0])

    def _draw(self, img) -> None:
        self._frames.disk(img, (self.x, 0.5), 0.02, (30, 30, 200))


def make_env(config) -> GoalEnv:
    """Build an environment from an EnvConfig or an env id string."""
    if isinstance(config, str):
        config = EnvConfig(env_id=config)
    env_id = config.env_id
    if env_id.startswith("hand"):
        return HandGame(config)
    if env_id.startswith("robot"):
        return RobotGame(config)
    if env_id == "sticky_line":
        return StickyLine(config)
    raise ValueError(f"unknown env_id {env_id!r}")


def env_reset(config: EnvConfig, rng):
    """Create and reset an environment; returns (env, first observation)."""
    env = make_env(config)
    return env, env.reset(rng)
