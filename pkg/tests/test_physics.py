import math

import numpy as np
import pytest

from herlab.envs.physics import (
    GRAVITY,
    RESTITUTION,
    BallState,
    HandState,
    ManipulatorState,
    Wall,
    ball_integrate,
    carry,
    forward_kinematics,
    jacobian,
    release,
    try_grab,
)


def fly(ball, dt, steps, wall=None):
    for _ in range(steps):
        ball = ball_integrate(ball, dt, wall=wall)
    return ball


def test_ball_at_rest_on_floor_stays_put():
    b = BallState(pos=[0.3, 0.02], vel=[0.0, 0.0], on_ground=True)
    for dt in (0.001, 0.05, 0.3):
        out = ball_integrate(b, dt)
        assert np.array_equal(out.pos, b.pos)
        assert np.array_equal(out.vel, b.vel)
        assert out.on_ground


def test_vertical_bounce_keeps_seventy_percent():
    b = BallState(pos=[0.3, 0.025], vel=[0.0, -2.0])
    out = ball_integrate(b, 0.01)
    assert out.bounce_count["floor"] == 1
    surface, pre, post = out.bounces[0]
    assert surface == "floor"
    # velocity just before contact includes this step's gravity
    assert post == pytest.approx(RESTITUTION * pre, abs=1e-15)
    assert out.vel[1] == pytest.approx(0.7 * (2.0 + GRAVITY * 0.01))


def test_free_fall_speed_matches_closed_form():
    b = BallState(pos=[0.5, 0.95], vel=[0.0, 0.0])
    out = fly(b, 0.01, 100)
    # v = g t with g = 1 unit/s^2, t = 1 s
    assert np.hypot(*out.vel) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("v0", [(0.3, 0.2), (-0.2, 0.5), (0.1, 0.0)])
def test_projectile_within_two_percent(v0):
    p0 = np.array([0.5, 0.6])
    b = BallState(pos=p0, vel=v0)
    dt = 0.01
    worst = 0.0
    for k in range(1, 101):
        b = ball_integrate(b, dt)
        t = k * dt
        exact = p0 + np.array(v0) * t - np.array([0.0, 0.5 * GRAVITY * t * t])
        worst = max(worst, np.linalg.norm(b.pos - exact) / np.linalg.norm(exact))
    assert not b.bounces
    assert worst < 0.02


def test_every_bounce_scales_normal_speed():
    rng = np.random.default_rng(3)
    wall = Wall()
    seen = 0
    for _ in range(40):
        b = BallState(pos=[rng.uniform(0.05, 0.5), rng.uniform(0.1, 0.9)], vel=rng.uniform(-2, 2, 2))
        for _ in range(200):
            b = ball_integrate(b, 0.05, wall=wall)
            for _, pre, post in b.bounces:
                assert post == pytest.approx(RESTITUTION * pre, rel=1e-12)
                seen += 1
            assert 0.0 <= b.pos[0] <= 1.0 and 0.0 <= b.pos[1] <= 1.0
    assert seen > 50


def test_ball_cannot_pass_through_obstacle():
    wall = Wall()
    b = BallState(pos=[0.4, 0.1], vel=[2.0, 0.0])
    for _ in range(30):
        b = ball_integrate(b, 0.05, wall=wall)
        if b.pos[1] - b.radius < wall.height:
            assert b.pos[0] <= wall.left - b.radius + 1e-12
    assert b.bounce_count["obstacle"] >= 1


def test_friction_slows_rolling_ball():
    b = BallState(pos=[0.2, 0.02], vel=[0.5, 0.0], on_ground=True)
    out = ball_integrate(b, 0.05)
    assert out.vel[0] == pytest.approx(0.5 - 0.1 * GRAVITY * 0.05)
    out = fly(b, 0.05, 400)
    assert out.vel[0] == 0.0


def test_bouncing_ball_eventually_lands():
    b = fly(BallState(pos=[0.3, 0.8], vel=[0.0, 0.0]), 0.05, 400)
    assert b.on_ground and b.vel[1] == 0.0
    assert b.pos[1] == pytest.approx(b.radius)


def test_integrate_rejects_bad_input():
    with pytest.raises(ValueError):
        ball_integrate(BallState(pos=[0.5, 0.5], vel=[0, 0]), 0.0)
    with pytest.raises(ValueError):
        ball_integrate(BallState(pos=[0.5, 0.5], vel=[0, 0], is_held=True), 0.1)


def test_grab_on_overlap_and_not_when_disjoint():
    ball = BallState(pos=[0.2, 0.02], vel=[0, 0], on_ground=True)
    hand = HandState(pos=[0.2, 0.02], vel=[0, 0], is_close=True)
    assert try_grab(hand, ball)
    assert ball.is_held and not ball.on_ground

    ball = BallState(pos=[0.2, 0.02], vel=[0, 0], on_ground=True)
    hand = HandState(pos=[0.2, 0.02 + ball.radius + 0.001], vel=[0, 0], is_close=True)
    assert not try_grab(hand, ball)
    assert try_grab(hand, ball, tolerance=0.002)


def test_release_keeps_hand_velocity():
    ball = BallState(pos=[0.2, 0.2], vel=[0, 0])
    hand = HandState(pos=[0.2, 0.2], vel=[0, 0], is_close=True)
    try_grab(hand, ball)
    hand.move([1.0, 2.0], 0.01)
    carry(hand, ball)
    assert np.array_equal(ball.vel, hand.vel)
    released = release(hand)
    assert released is ball
    assert np.array_equal(ball.vel, [1.0, 2.0])
    assert not ball.is_held and hand.held_ball is None


def test_hand_stops_at_bounds():
    hand = HandState(pos=[0.49, 0.5], vel=[0, 0])
    hand.move([1.0, 0.5], 0.05)
    assert hand.pos[0] == 0.5
    assert hand.vel[0] == 0.0 and hand.vel[1] == 0.5


def test_fk_straight_and_rotated_arm():
    base = np.array([0.33, 0.5])
    tip, _ = forward_kinematics([0.0, 0.0], [0.0, 0.0], base, [0.25, 0.25])
    assert np.allclose(tip, base + [0.5, 0.0])
    tip, _ = forward_kinematics([math.pi / 2, 0.0], [0.0, 0.0], base, [0.25, 0.25])
    assert np.allclose(tip, base + [0.0, 0.5])


@pytest.mark.parametrize("seed", range(5))
def test_fk_velocity_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, 2)
    theta_dot = rng.uniform(-3, 3, 2)
    base, links = np.array([0.33, 0.5]), np.array([0.3, 0.3])
    _, vel = forward_kinematics(theta, theta_dot, base, links)
    h = 1e-6
    plus, _ = forward_kinematics(theta + h * theta_dot, theta_dot, base, links)
    minus, _ = forward_kinematics(theta - h * theta_dot, theta_dot, base, links)
    fd = (plus - minus) / (2 * h)
    assert np.linalg.norm(vel - fd) / np.linalg.norm(fd) < 1e-6


def test_jacobian_against_hand_derived_two_link():
    t1, t2 = 0.7, -1.9
    l1, l2 = 0.3, 0.3
    expected = np.array([
        [-l1 * math.sin(t1) - l2 * math.sin(t1 + t2), -l2 * math.sin(t1 + t2)],
        [l1 * math.cos(t1) + l2 * math.cos(t1 + t2), l2 * math.cos(t1 + t2)],
    ])
    assert np.allclose(jacobian([t1, t2], [l1, l2]), expected, atol=1e-15)


def test_fk_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        forward_kinematics([0.0], [0.0, 0.0], [0, 0], [0.3, 0.3])


def test_manipulator_tip_within_reach():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = ManipulatorState(theta=rng.uniform(0, 2 * math.pi, 2), theta_dot=[0, 0])
        assert np.linalg.norm(m.grip_point - m.base) <= m.link_lengths.sum() + 1e-12


def test_minus_two_rebounds_at_one_point_four():
    b = BallState(pos=[0.3, 0.02 + 1e-9], vel=[0.0, -2.0])
    out = ball_integrate(b, 1e-6)
    assert out.vel[1] == pytest.approx(1.4, abs=1e-5)
