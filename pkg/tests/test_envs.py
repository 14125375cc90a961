import math

import numpy as np
import pytest

from herlab.envs import ENV_IDS, EnvConfig, compute_reward, make_env, scale_observation
from herlab.envs.frames import read_ppm

OBS_DIMS = {
    "hand_reach": 5,
    "hand_v0": 9, "hand_v1": 9, "hand_v2": 9,
    "hand_wall_v0": 9, "hand_wall_v1": 9, "hand_wall_v2": 9,
    # two angles become two (cos, sin) pairs
    "robot_reach": 11,
    "robot_v0": 15, "robot_v1": 15, "robot_v2": 15,
    "sticky_line": 2,
}


@pytest.mark.parametrize("env_id", ENV_IDS)
def test_observation_dimensions(env_id):
    env = make_env(env_id)
    o = env.reset(np.random.default_rng(0))
    assert o.observation.shape == (OBS_DIMS[env_id],)
    assert o.achieved_goal.shape == (2,) and o.desired_goal.shape == (2,)
    for _ in range(5):
        o, r, done, info = env.step(env.action_sample(np.random.default_rng(1)))
        assert o.observation.shape == (OBS_DIMS[env_id],)
        assert r in (0.0, -1.0)


def test_unknown_env_rejected():
    with pytest.raises(ValueError):
        EnvConfig(env_id="hand_v9")


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(max_steps=0)
    with pytest.raises(ValueError):
        EnvConfig(reward_threshold=-1.0)
    with pytest.raises(ValueError):
        EnvConfig(steps_per_second=0)


def test_reward_values():
    assert compute_reward([0.3, 0.3], [0.3, 0.3], 0.05) == 0.0
    assert compute_reward([0.0, 0.0], [0.05, 0.0], 0.05) == -1.0
    assert compute_reward([0.2, 0.2], [0.2, 0.26], 0.05) == -1.0
    batch = compute_reward(np.zeros((3, 2)), [[0, 0], [0.1, 0], [0.01, 0]], 0.05)
    assert batch.tolist() == [0.0, -1.0, 0.0]


def test_v0_starts_holding_ball():
    for seed in range(20):
        env = make_env("hand_v0")
        env.reset(np.random.default_rng(seed))
        assert env.ball.is_held and env.holder.is_close


def test_robot_v1_ball_hangs_in_sector():
    env = make_env("robot_v1")
    for seed in range(50):
        env.reset(np.random.default_rng(seed))
        b = env.ball
        assert not b.is_held and not b.on_ground and b.suspended
        rel = b.pos - env.base
        ang = math.degrees(math.atan2(rel[1], rel[0]))
        assert 75.0 <= ang <= 105.0
        assert 0.45 - 1e-12 <= np.linalg.norm(rel) <= 0.6 + 1e-12
        assert b.pos[1] + b.radius <= 1.0 + 1e-12
        # hangs still while not grabbed
        env.step(np.array([0.0, 0.0, -1.0]))
        assert np.array_equal(env.ball.pos, b.pos)


def test_v2_held_fraction_is_half():
    env = make_env("hand_v2")
    rng = np.random.default_rng(7)
    held = 0
    for _ in range(10_000):
        env.reset(rng)
        held += env.ball.is_held
    assert abs(held / 10_000 - 0.5) <= 0.02


def test_zero_action_keeps_hand_still():
    env = make_env("hand_reach")
    o = env.reset(np.random.default_rng(0))
    o2, *_ = env.step(np.zeros(3))
    assert np.array_equal(o.achieved_goal, o2.achieved_goal)


def test_action_clipping():
    a = make_env("hand_v1")
    b = make_env("hand_v1")
    a.reset(np.random.default_rng(4))
    b.reset(np.random.default_rng(4))
    oa, *_ = a.step(np.array([10.0, -10.0, 10.0]))
    ob, *_ = b.step(np.array([1.0, -1.0, 1.0]))
    assert np.array_equal(oa.observation, ob.observation)


def test_wrong_action_dimension_and_finished_episode():
    env = make_env(EnvConfig(env_id="hand_v1", max_steps=2))
    env.reset(np.random.default_rng(0))
    with pytest.raises(ValueError):
        env.step(np.zeros(2))
    env.step(np.zeros(3))
    _, r, done, info = env.step(np.zeros(3))
    assert done and r == -1.0 and not info["is_success"]
    with pytest.raises(RuntimeError):
        env.step(np.zeros(3))


def test_scaling_examples():
    raw = np.zeros(9)
    raw[0] = 0.0
    scaled = scale_observation(raw, "robot_reach")
    assert scaled[:2].tolist() == [1.0, 0.0]
    raw2 = raw.copy()
    raw2[0] = 2 * math.pi
    assert np.allclose(scale_observation(raw2, "robot_reach"), scaled, atol=1e-15)
    hand = np.array([0.5, 0.5, 0, 0, 1.0])
    assert scale_observation(hand, "hand_reach")[:2].tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        scale_observation(np.zeros(4), "hand_reach")


def test_action_sample_moments_and_determinism():
    env = make_env("robot_v1")
    rng = np.random.default_rng(11)
    samples = np.array([env.action_sample(rng) for _ in range(100_000)])
    box = env.action_box
    assert np.all(samples >= box.low) and np.all(samples <= box.high)
    mid = (box.low + box.high) / 2
    assert np.all(np.abs(samples.mean(0) - mid) <= 0.01 * (box.high - box.low))
    s1 = [env.action_sample(np.random.default_rng(5)) for _ in range(3)]
    s2 = [env.action_sample(np.random.default_rng(5)) for _ in range(3)]
    assert all(np.array_equal(a, b) for a, b in zip(s1, s2))


@pytest.mark.parametrize("env_id", ["hand_v1", "hand_wall_v2", "robot_v1", "sticky_line"])
def test_trajectories_are_bit_identical(env_id):
    def run():
        env = make_env(env_id)
        rng = np.random.default_rng(123)
        obs = [env.reset(rng).observation]
        for _ in range(50):
            o, r, done, _ = env.step(env.action_sample(rng))
            obs.append(o.observation)
            if done:
                obs.append(env.reset(rng).observation)
        return np.concatenate(obs)

    assert run().tobytes() == run().tobytes()


def test_held_ball_moves_with_hand():
    env = make_env("hand_v0")
    env.reset(np.random.default_rng(2))
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = env.action_sample(rng)
        a[2] = 1.0
        env.step(a)
        assert np.array_equal(env.ball.vel, env.holder.vel)
        assert np.array_equal(env.ball.pos, env.holder.pos)


def test_hand_can_pick_up_and_throw():
    env = make_env("hand_v1")
    env.reset(np.random.default_rng(0))
    # drive the hand onto the ball
    for _ in range(60):
        d = env.ball.pos - env.holder.pos
        if np.linalg.norm(d) < 1e-3 or env.done:
            break
        env.step(np.append(np.clip(d / env.dt, -1, 1), -1.0))
    env.step(np.array([0.0, 0.0, 1.0]))
    assert env.ball.is_held
    env.step(np.array([1.0, 1.0, 1.0]))
    env.step(np.array([0.0, 0.0, -1.0]))
    assert not env.ball.is_held
    assert env.ball.vel[0] == pytest.approx(1.0)


def test_hand_reach_goal_reachable():
    env = make_env("hand_reach")
    o = env.reset(np.random.default_rng(1))
    done, r = False, -1.0
    while not done:
        d = o.desired_goal - o.achieved_goal
        o, r, done, info = env.step(np.append(np.clip(d / env.dt, -1, 1), 0.0))
    assert r == 0.0 and info["is_success"]


def test_sticky_terminate_freezes_achieved_goal():
    env = make_env("sticky_line")
    o = env.reset(np.random.default_rng(0))
    o, *_ = env.step(np.array([1.0, 0.0]))
    frozen = o.achieved_goal.copy()
    o, _, _, info = env.step(np.array([0.0, 1.0]))
    assert info["terminated_in_place"]
    assert np.array_equal(o.achieved_goal, frozen)
    rng = np.random.default_rng(2)
    while not env.done:
        o, *_ = env.step(env.action_sample(rng))
        assert np.array_equal(o.achieved_goal, frozen)
    assert o.observation[1] == 1.0


def test_frame_dump(tmp_path):
    env = make_env(EnvConfig(env_id="robot_v0", frame_dir=str(tmp_path), screen=(40, 40)))
    env.reset(np.random.default_rng(0))
    env.step(np.zeros(3))
    files = sorted(tmp_path.iterdir())
    assert len(files) == 2
    img = read_ppm(str(files[0]))
    assert img.shape == (40, 40, 3)
    assert (img != 255).any()
