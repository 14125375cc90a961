import os

import numpy as np
import pytest

from herlab.experiment import (
    METRIC_FIELDS,
    ExperimentConfig,
    MetricsRow,
    Trainer,
    count_positive,
    emit_metrics,
    evaluate,
    fork_rng,
    read_metrics,
    resolve_config,
    run_experiment,
)


def tiny(**kw):
    base = dict(env_id="hand_reach", algo="her", epochs=2, cycles_per_epoch=1, episodes_per_cycle=2,
                opt_steps_per_cycle=3, eval_episodes=3, max_steps=10)
    base.update(kw)
    return ExperimentConfig(**base)


def test_algo_flags():
    assert tiny(algo="her").filter_on is False and tiny(algo="her").strategy == "future"
    assert tiny(algo="filtered+ibs").filter_on and tiny(algo="filtered+ibs").strategy == "ibs"
    c = tiny(env_id="hand_v1", algo="cher")
    assert c.uses_curriculum and c.filter_on
    assert not tiny(env_id="hand_v1", algo="unfiltered-cher+ibs").filter_on
    assert not tiny(env_id="hand_v1", algo="cher", filter_override=False).filter_on


@pytest.mark.parametrize("kw", [
    dict(env_id="hand_v0", algo="cher"),
    dict(algo="nope"),
    dict(env_id="hand_v9"),
    dict(cycles_per_epoch=0),
    dict(eval_episodes=0),
    dict(epochs=-1),
    dict(critic_mode="big"),
])
def test_config_rejections(kw):
    with pytest.raises(ValueError):
        tiny(**kw)


def test_fork_rng_is_label_specific_and_stable():
    a = fork_rng(3, "env").random(4)
    assert np.array_equal(a, fork_rng(3, "env").random(4))
    assert not np.array_equal(a, fork_rng(3, "eval").random(4))
    assert not np.array_equal(a, fork_rng(4, "env").random(4))


def test_count_positive():
    assert count_positive([-1.0] * 5) == 0
    assert count_positive([0.0, -1.0, 0.0, 0.0]) == 3
    assert count_positive([0.0], running=7) == 8


def test_emit_zero_rows_is_header_only(tmp_path):
    p = tmp_path / "m.csv"
    emit_metrics([], str(p))
    assert p.read_text() == ",".join(METRIC_FIELDS) + "\n"


def test_metrics_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rows = [MetricsRow(i + 1, float(rng.random()), float(rng.random()), -float(rng.random() * 50), 10 * i,
                       float(rng.random()), 0.95**i, 0.2 + 0.1 / 3, i // 2) for i in range(5)]
    p = str(tmp_path / "m.csv")
    emit_metrics(rows, p)
    back = read_metrics(p)
    for a, b in zip(rows, back):
        for name in METRIC_FIELDS:
            assert abs(getattr(a, name) - getattr(b, name)) <= 1e-12
    assert "," in open(p).readline()


def test_zero_epochs_writes_header_only(tmp_path):
    path = run_experiment(tiny(epochs=0, seed=5), str(tmp_path))
    assert open(path).read().strip() == ",".join(METRIC_FIELDS)
    assert "seed=5" in (tmp_path / "manifest.txt").read_text().splitlines()


def test_run_rows_and_invariants(tmp_path):
    path = run_experiment(tiny(epochs=3), str(tmp_path))
    rows = read_metrics(path)
    assert [r.epoch for r in rows] == [1, 2, 3]
    counts = [r.positive_reward_count for r in rows]
    assert counts == sorted(counts)
    for r in rows:
        assert 0.0 <= r.success_rate <= 1.0
        assert r.kl_distance >= 0.0
    assert rows[1].epsilon == pytest.approx(0.95)
    assert rows[1].sigma < rows[0].sigma


def test_same_seed_same_bytes(tmp_path):
    cfg = tiny(env_id="hand_v1", algo="cher+ibs", epochs=2)
    a = run_experiment(cfg, str(tmp_path / "a"))
    b = run_experiment(cfg, str(tmp_path / "b"))
    assert open(a, "rb").read() == open(b, "rb").read()
    c = run_experiment(tiny(env_id="hand_v1", algo="cher+ibs", epochs=2, seed=1), str(tmp_path / "c"))
    assert open(a, "rb").read() != open(c, "rb").read()


def test_evaluate_untrained_reach_is_near_random():
    tr = Trainer(tiny(eval_episodes=100, max_steps=50))
    # zero actor weights: the hand never moves
    tr.agent.actor.params[:] = 0.0
    sr, dist, q0 = evaluate(tr.agent, tr.eval_env, 100, fork_rng(0, "eval"))
    assert sr < 0.05
    assert dist > 0.0
    assert -1 / (1 - 0.98) <= q0 <= 0.0 + 0.1
    with pytest.raises(ValueError):
        evaluate(tr.agent, tr.eval_env, 0, fork_rng(0, "eval"))


def test_cher_layer_gate_advances(tmp_path):
    cfg = tiny(env_id="hand_v1", algo="cher", epochs=1, k_window=1, success_gate=0.5, eval_episodes=1)
    tr = Trainer(cfg)
    assert tr.layer_index == 0
    tr.curriculum.record(True)
    assert tr.curriculum.ready()
    actor = tr.agent.actor.params.copy()
    tr._advance()
    assert tr.layer_index == 1 and len(tr.buffer) == 0
    assert np.array_equal(actor, tr.agent.actor.params)
    assert tr.grid.goal_region == tr.curriculum.spec.goal_region
    row = tr.run_epoch()
    assert row.layer_index == 1


def test_layer_one_episode_ends_on_reach():
    from herlab.experiment import _View, run_episode
    from herlab.curriculum import get_curriculum
    tr = Trainer(tiny(env_id="hand_v1", algo="cher"))
    spec = get_curriculum("hand_v1")[0]
    rng = fork_rng(0, "t")
    for _ in range(20):
        trace = run_episode(tr.agent, tr.env, _View(spec), rng, rng)
        assert trace.goal.shape == (len(trace), 2)
        d = np.linalg.norm(trace.achieved[1:] - trace.goal, axis=1)
        # only the last transition may reach the layer goal
        assert (d[:-1] >= spec.reward_threshold).all()


def test_config_sources(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# comment\nenv_id = sticky_line\nalgo = filtered\nepochs = 7\nhidden = 32,32\nclip_targets = false\n")
    cfg = resolve_config(path=str(f), environ={})
    assert (cfg.env_id, cfg.algo, cfg.epochs, cfg.hidden, cfg.clip_targets) == ("sticky_line", "filtered", 7, (32, 32), False)
    cfg = resolve_config({"seed": 9}, str(f), environ={"HERLAB_EPOCHS": "3", "HERLAB_TAU": "0.1"})
    assert (cfg.epochs, cfg.tau, cfg.seed) == (3, 0.1, 9)
    with pytest.raises(ValueError):
        resolve_config(environ={}, extra_text={"bogus": "1"})
    f.write_text("epochs 3\n")
    with pytest.raises(ValueError):
        resolve_config(path=str(f), environ={})
