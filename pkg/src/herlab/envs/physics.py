"""Kinematic 2D ball physics, grasping, and a planar two-link arm.

All coordinates are screen units: the screen is the unit square, x grows to
the right and y grows upward, the floor is ``y = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

# 10 m/s^2 on a screen that spans 10 m (500 px at 50 px/m) is 1 unit/s^2.
GRAVITY_MPS2 = 10.0
METERS_PER_UNIT = 10.0
GRAVITY = GRAVITY_MPS2 / METERS_PER_UNIT
RESTITUTION = 0.7
FRICTION = 0.1
BALL_MASS = 3.0
BALL_RADIUS = 0.02

_EPS = 1e-9


@dataclass(frozen=True)
class Wall:
    """Vertical obstacle standing on the floor."""

    x: float = 0.55
    height: float = 0.45
    thickness: float = 0.02

    @property
    def left(self) -> float:
        return self.x - self.thickness / 2

    @property
    def right(self) -> float:
        return self.x + self.thickness / 2


@dataclass
class BallState:
    pos: np.ndarray
    vel: np.ndarray
    radius: float = BALL_RADIUS
    mass: float = BALL_MASS
    is_held: bool = False
    on_ground: bool = False
    # robot-env balls hang in the air until first grabbed
    suspended: bool = False
    bounce_count: dict = field(
        default_factory=lambda: {"floor": 0, "wall": 0, "ceiling": 0, "obstacle": 0}
    )
    # (surface, normal speed before, normal speed after) of every bounce in the last step
    bounces: list = field(default_factory=list)

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).copy()
        self.vel = np.asarray(self.vel, dtype=float).copy()

    def copy(self) -> "BallState":
        return BallState(
            pos=self.pos,
            vel=self.vel,
            radius=self.radius,
            mass=self.mass,
            is_held=self.is_held,
            on_ground=self.on_ground,
            suspended=self.suspended,
            bounce_count=dict(self.bounce_count),
        )


@dataclass
class HandState:
    pos: np.ndarray
    vel: np.ndarray
    is_close: bool = False
    held_ball: Optional[BallState] = None
    # permitted rectangle (x_lo, x_hi, y_lo, y_hi)
    bounds: tuple = (BALL_RADIUS, 0.5, BALL_RADIUS, 1.0 - BALL_RADIUS)

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).copy()
        self.vel = np.asarray(self.vel, dtype=float).copy()

    @property
    def grip_point(self) -> np.ndarray:
        return self.pos

    @property
    def grip_velocity(self) -> np.ndarray:
        return self.vel

    def move(self, velocity, dt: float) -> None:
        """Integrate one step at the commanded velocity, stopping at the bounds."""
        x_lo, x_hi, y_lo, y_hi = self.bounds
        vx, vy = float(velocity[0]), float(velocity[1])
        x = self.pos[0] + vx * dt
        y = self.pos[1] + vy * dt
        if x < x_lo or x > x_hi:
            x = min(max(x, x_lo), x_hi)
            vx = 0.0
        if y < y_lo or y > y_hi:
            y = min(max(y, y_lo), y_hi)
            vy = 0.0
        self.pos = np.array([x, y])
        self.vel = np.array([vx, vy])


@dataclass
class ManipulatorState:
    theta: np.ndarray
    theta_dot: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.array([0.33, 0.5]))
    link_lengths: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.3]))
    is_close: bool = False
    held_ball: Optional[BallState] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        self.theta_dot = np.asarray(self.theta_dot, dtype=float).copy()
        self.base = np.asarray(self.base, dtype=float).copy()
        self.link_lengths = np.asarray(self.link_lengths, dtype=float).copy()
        if not (len(self.theta) == len(self.theta_dot) == len(self.link_lengths)):
            raise ValueError("theta, theta_dot and link_lengths must have equal length")

    @property
    def grip_point(self) -> np.ndarray:
        return forward_kinematics(self.theta, self.theta_dot, self.base, self.link_lengths)[0]

    @property
    def grip_velocity(self) -> np.ndarray:
        return forward_kinematics(self.theta, self.theta_dot, self.base, self.link_lengths)[1]

    def move(self, theta_dot, dt: float) -> None:
        self.theta_dot = np.asarray(theta_dot, dtype=float).copy()
        self.theta = self.theta + self.theta_dot * dt


Holder = Union[HandState, ManipulatorState]


def forward_kinematics(theta, theta_dot, base, link_lengths):
    """Tip position and velocity of a planar serial chain.

    Joint angles are relative; link ``i`` points along the cumulative angle
    ``theta[0] + ... + theta[i]``.
    """
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    lengths = np.asarray(link_lengths, dtype=float)
    if not (theta.shape == theta_dot.shape == lengths.shape):
        raise ValueError("theta, theta_dot and link_lengths must have equal length")
    cum = np.cumsum(theta)
    cx = lengths * np.cos(cum)
    cy = lengths * np.sin(cum)
    tip = np.asarray(base, dtype=float) + np.array([cx.sum(), cy.sum()])
    return tip, jacobian(theta, lengths) @ theta_dot


def jacobian(theta, link_lengths) -> np.ndarray:
    """2 x n Jacobian of the tip position w.r.t. the joint angles."""
    cum = np.cumsum(np.asarray(theta, dtype=float))
    lengths = np.asarray(link_lengths, dtype=float)
    # column j sums the links at or beyond joint j
    sx = np.cumsum((lengths * np.sin(cum))[::-1])[::-1]
    cx = np.cumsum((lengths * np.cos(cum))[::-1])[::-1]
    return np.vstack([-sx, cx])


def _support_height(x: float, radius: float, wall: Optional[Wall]) -> float:
    if wall is not None and wall.left - radius < x < wall.right + radius:
        return wall.height
    return 0.0


def ball_integrate(
    ball: BallState,
    dt: float,
    wall: Optional[Wall] = None,
    width: float = 1.0,
    height: float = 1.0,
    gravity: float = GRAVITY,
) -> BallState:
    """Advance a free ball by one semi-implicit Euler step and resolve collisions.

    Returns a new state; ``ball`` is left untouched.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if ball.is_held:
        raise ValueError("held balls are moved by their holder")
    out = ball.copy()
    if out.suspended:
        return out

    r = out.radius
    x0, y0 = float(out.pos[0]), float(out.pos[1])
    vx, vy = float(out.vel[0]), float(out.vel[1])

    if out.on_ground and y0 - r > _support_height(x0, r, wall) + _EPS:
        out.on_ground = False

    if out.on_ground:
        vy = 0.0
        dv = FRICTION * gravity * dt
        vx = math.copysign(max(abs(vx) - dv, 0.0), vx) if vx != 0.0 else 0.0
    else:
        vy -= gravity * dt
    x = x0 + vx * dt
    y = y0 + vy * dt

    bounces = []

    def bounce(surface: str, v_normal: float) -> float:
        post = -RESTITUTION * v_normal
        bounces.append((surface, abs(v_normal), abs(post)))
        out.bounce_count[surface] += 1
        return post

    # obstacle wall: top face first, then the vertical faces (swept, so fast balls cannot tunnel)
    if wall is not None:
        in_slab = wall.left - r < x < wall.right + r
        if in_slab and y - r < wall.height and y0 - r >= wall.height - _EPS:
            y = wall.height + r
            if vy < 0:
                vy = bounce("obstacle", vy)
        elif y - r < wall.height:
            if x0 <= wall.left - r < x or (in_slab and x0 < wall.x):
                x = wall.left - r
                if vx > 0:
                    vx = bounce("obstacle", vx)
            elif x < wall.right + r <= x0 or (in_slab and x0 >= wall.x):
                x = wall.right + r
                if vx < 0:
                    vx = bounce("obstacle", vx)

    if x - r < 0.0:
        x = r
        if vx < 0:
            vx = bounce("wall", vx)
    elif x + r > width:
        x = width - r
        if vx > 0:
            vx = bounce("wall", vx)
    if y + r > height:
        y = height - r
        if vy > 0:
            vy = bounce("ceiling", vy)

    support = _support_height(x, r, wall)
    if y - r <= support and not out.on_ground:
        y = support + r
        if vy < 0:
            post = -RESTITUTION * vy
            # too slow to leave the surface within one step: the ball lands
            if post < gravity * dt:
                vy = 0.0
                out.on_ground = True
            else:
                vy = bounce("floor" if support == 0.0 else "obstacle", vy)
        else:
            out.on_ground = vy == 0.0
    elif out.on_ground:
        y = support + r

    out.pos = np.array([x, y])
    out.vel = np.array([vx, vy])
    out.bounces = bounces
    return out


def try_grab(holder: Holder, ball: BallState, tolerance: float = 0.0) -> bool:
    """Bind ``ball`` to ``holder`` if the grip point overlaps the ball.

    Call right after the holder closes.
    """
    if holder.held_ball is not None or ball.is_held:
        return False
    grip = holder.grip_point
    if math.hypot(grip[0] - ball.pos[0], grip[1] - ball.pos[1]) >= ball.radius + tolerance:
        return False
    ball.is_held = True
    ball.on_ground = False
    ball.suspended = False
    holder.held_ball = ball
    carry(holder, ball)
    return True


def carry(holder: Holder, ball: BallState, width: float = 1.0, height: float = 1.0) -> None:
    """Move a held ball with its holder (position kept inside the screen)."""
    r = ball.radius
    grip = holder.grip_point
    ball.pos = np.array([min(max(grip[0], r), width - r), min(max(grip[1], r), height - r)])
    ball.vel = np.array(holder.grip_velocity, dtype=float)


def release(holder: Holder) -> Optional[BallState]:
    """Let go of the held ball; it keeps the holder's current velocity."""
    ball = holder.held_ball
    if ball is None:
        return None
    ball.vel = np.array(holder.grip_velocity, dtype=float)
    ball.is_held = False
    holder.held_ball = None
    return ball
