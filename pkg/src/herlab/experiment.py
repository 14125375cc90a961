"""Training runs: config, seeded streams, the epoch/cycle loop, evaluation and metric files."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import zlib
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import __version__
from .curriculum import (
    CRITIC_MODES,
    CurriculumState,
    advance_layer,
    full_vector,
    get_curriculum,
    layer_input_fn,
    mask_unrevealed,
    state_to_obs,
)
from .ddpg import DdpgAgent, DdpgConfig
from .envs.core import ENV_IDS, EnvConfig, compute_reward, scaled_dim
from .envs.games import make_env
from .her import EpisodeTrace, HerConfig, VirtualGoalGrid, kl_distance, relabel_episode
from .replay import PriorityBuffer

log = logging.getLogger(__name__)

ALGOS = (
    "her", "her+ibs", "filtered", "filtered+ibs",
    "cher", "cher+ibs", "unfiltered-cher", "unfiltered-cher+ibs",
)
CURRICULUM_ENVS = ("hand_v1", "hand_wall_v1", "robot_v1")
METRIC_FIELDS = (
    "epoch", "success_rate", "mean_final_distance", "estimated_q0",
    "positive_reward_count", "kl_distance", "epsilon", "sigma", "layer_index",
)
STREAMS = ("env", "agent-init", "exploration", "relabel", "sampler", "eval", "curriculum")
ENV_PREFIX = "HERLAB_"


@dataclass
class ExperimentConfig:
    env_id: str = "hand_reach"
    algo: str = "her"
    seed: int = 0
    epochs: int = 50
    cycles_per_epoch: int = 50
    episodes_per_cycle: int = 16
    opt_steps_per_cycle: int = 40
    eval_episodes: int = 100
    max_steps: int = 50
    # agent
    hidden: tuple = (64, 64, 64)
    gamma: float = 0.98
    tau: float = 0.05
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 64
    clip_norm: float = 3.0
    epsilon: float = 1.0
    epsilon_decay: float = 0.95
    epsilon_final: float = 0.05
    noise_scale: float = 0.05
    clip_targets: bool = True
    # replay
    buffer_capacity: int = 1_000_000
    per_alpha: float = 0.6
    epsilon_per: float = 0.01
    # relabeling
    k: int = 4
    weight_floor: float = 0.002
    architecture: str = "simultaneous"
    sigma: float = 1.0
    sigma_final: float = 0.2
    sigma_decay: float = 0.9
    sigma_decay_mode: str = "variance"
    grid_size: int = 20
    # curriculum
    success_gate: float = 0.9
    k_window: int = 20
    critic_mode: str = "reset"
    filter_override: Optional[bool] = None

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise ValueError(f"unknown env {self.env_id!r}")
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        if self.uses_curriculum and self.env_id not in CURRICULUM_ENVS:
            raise ValueError(f"{self.algo} needs one of {CURRICULUM_ENVS}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("cycles_per_epoch", "episodes_per_cycle", "opt_steps_per_cycle", "eval_episodes",
                     "max_steps", "batch_size", "buffer_capacity", "grid_size", "k_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.critic_mode not in CRITIC_MODES:
            raise ValueError(f"critic_mode must be one of {CRITIC_MODES}")
        self.hidden = tuple(int(h) for h in self.hidden)
        # builds the sub-configs once so their own checks run now
        self.ddpg_config()
        self.her_config()

    @property
    def uses_curriculum(self) -> bool:
        return "cher" in self.algo

    @property
    def strategy(self) -> str:
        return "ibs" if self.algo.endswith("+ibs") else "future"

    @property
    def filter_on(self) -> bool:
        if self.filter_override is not None:
            return bool(self.filter_override)
        base = self.algo.split("+")[0]
        return base in ("filtered", "cher")

    def ddpg_config(self) -> DdpgConfig:
        return DdpgConfig(
            hidden=self.hidden, gamma=self.gamma, tau=self.tau, lr_actor=self.lr_actor, lr_critic=self.lr_critic,
            batch_size=self.batch_size, clip_norm=self.clip_norm, epsilon=self.epsilon,
            epsilon_decay=self.epsilon_decay, epsilon_final=self.epsilon_final, noise_scale=self.noise_scale,
            clip_targets=self.clip_targets,
        )

    def her_config(self) -> HerConfig:
        return HerConfig(k=self.k, strategy=self.strategy, filter_on=self.filter_on,
                         weight_floor=self.weight_floor, architecture=self.architecture)

    def grid_kwargs(self) -> dict:
        return dict(sigma=self.sigma, sigma_final=self.sigma_final, M=self.grid_size, N=self.grid_size,
                    decay=self.sigma_decay, decay_mode=self.sigma_decay_mode)


# config text <-> values


def _parse_value(text: str, default):
    text = text.strip()
    if isinstance(default, bool) or default is None:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        if low in ("none", ""):
            return None
        if default is None:
            return float(text)
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(int(v) for v in text.replace("(", "").replace(")", "").split(",") if v.strip())
    return text


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def read_config_file(path: str) -> dict:
    """key = value lines; '#' starts a comment."""
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{n}: expected key = value")
            out[key.strip()] = val.strip()
    return out


def resolve_config(overrides: Optional[dict] = None, path: Optional[str] = None, environ=None,
                   extra_text: Optional[dict] = None) -> ExperimentConfig:
    """Defaults, then the config file, then HERLAB_* variables, then text and typed overrides."""
    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    raw = {}
    if path:
        raw.update(read_config_file(path))
    environ = os.environ if environ is None else environ
    for key in defaults:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            raw[key] = environ[env_key]
    raw.update(extra_text or {})
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    values = {k: _parse_value(v, defaults[k]) for k, v in raw.items()}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**values)


# seeding


def fork_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per component; depends only on (seed, label)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


# metrics


@dataclass
class MetricsRow:
    epoch: int
    success_rate: float
    mean_final_distance: float
    estimated_q0: float
    positive_reward_count: int
    kl_distance: float
    epsilon: float
    sigma: float
    layer_index: int


def count_positive(rewards, running: int = 0) -> int:
    return running + int(np.count_nonzero(np.asarray(rewards) == 0.0))


def _cell(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))


def emit_metrics(rows, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([_cell(getattr(r, name)) for name in METRIC_FIELDS])


def read_metrics(path: str) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRIC_FIELDS:
            raise ValueError(f"{path}: unexpected header")
        rows = []
        for rec in reader:
            vals = {}
            for name in METRIC_FIELDS:
                kind = MetricsRow.__dataclass_fields__[name].type
                vals[name] = int(rec[name]) if kind == "int" else float(rec[name])
            rows.append(MetricsRow(**vals))
    return rows


def write_manifest(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as f:
        f.write(f"code_version={__version__}\n")
        for k, v in dataclasses.asdict(cfg).items():
            f.write(f"{k}={_format_value(v)}\n")
        f.write(f"strategy={cfg.strategy}\n")
        f.write(f"filter_on={cfg.filter_on}\n")


# episodes


class _View:
    """What the agent sees of an env observation: the whole task or one curriculum layer."""

    def __init__(self, spec=None):
        self.spec = spec

    def split(self, obs):
        """(state, achieved, desired) for the agent."""
        if self.spec is None:
            return obs.observation, obs.achieved_goal, obs.desired_goal
        g = state_to_obs(self.spec, full_vector(obs))
        return g.observation, g.achieved_goal, g.desired_goal

    def threshold(self, env) -> float:
        return env.threshold if self.spec is None else self.spec.reward_threshold


def run_episode(agent: DdpgAgent, env, view: _View, env_rng, act_rng, explore: bool = True):
    """One exploration episode. Ends on the env's own done flag, or on layer success for a layer view."""
    obs = env.reset(env_rng)
    s, ag, g = view.split(obs)
    thr = view.threshold(env)
    states, achieved, goals, actions = [s], [ag], [], []
    done = False
    while not done:
        a = agent.select_action(agent.input_fn(s, g), explore=explore, rng=act_rng)
        obs, _, done, _ = env.step(a)
        s2, ag2, g2 = view.split(obs)
        actions.append(a)
        goals.append(g)
        states.append(s2)
        achieved.append(ag2)
        if view.spec is not None and compute_reward(ag2, g, thr) == 0.0:
            done = True
        s, g = s2, g2
    return EpisodeTrace(np.array(states), np.array(actions), np.array(achieved), np.array(goals))


def evaluate(agent: DdpgAgent, env, n: int, rng, view: Optional[_View] = None, layer_hits: Optional[list] = None):
    """Greedy episodes on the full task. Returns (success_rate, mean_final_distance, estimated_q0).

    With a layer view, whether each episode met the layer's goal at some step is
    appended to ``layer_hits``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    view = view or _View()
    thr = view.threshold(env)
    successes = 0
    dists, q0 = [], []
    for _ in range(n):
        obs = env.reset(rng)
        s, _, g = view.split(obs)
        x0 = agent.input_fn(s, g)
        q0.append(float(agent.q_value(x0)[0]))
        hit = False
        done = False
        info = {"is_success": False}
        while not done:
            obs, _, done, info = env.step(agent.greedy(agent.input_fn(s, g)))
            s2, ag2, g2 = view.split(obs)
            hit = hit or compute_reward(ag2, g, thr) == 0.0
            s, g = s2, g2
        successes += bool(info["is_success"])
        dists.append(float(np.linalg.norm(obs.achieved_goal - obs.desired_goal)))
        if layer_hits is not None:
            layer_hits.append(hit)
    return successes / n, float(np.mean(dists)), float(np.mean(q0))


# the run


class Trainer:
    """Holds every piece of one run; ``run_epoch`` advances it by one epoch."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.rngs = {name: fork_rng(cfg.seed, name) for name in STREAMS}
        self.env = make_env(EnvConfig(env_id=cfg.env_id, max_steps=cfg.max_steps))
        self.eval_env = make_env(EnvConfig(env_id=cfg.env_id, max_steps=cfg.max_steps))
        self.her = cfg.her_config()
        self.curriculum = None
        if cfg.uses_curriculum:
            specs = get_curriculum(cfg.env_id)
            self.curriculum = CurriculumState(specs, cfg.success_gate, cfg.k_window)
            in_dim = specs[0].final_width
        else:
            in_dim = scaled_dim(cfg.env_id) + 2
        box = self.env.action_box
        self.agent = DdpgAgent(in_dim, box.low, box.high, cfg.ddpg_config(), rng=self.rngs["agent-init"])
        if self.curriculum is not None:
            mask_unrevealed(self.agent, self.curriculum.spec)
            region = self.curriculum.spec.goal_region
        else:
            region = self.env.goal_region
        self.grid = VirtualGoalGrid(region, **cfg.grid_kwargs())
        self.buffer = PriorityBuffer(cfg.buffer_capacity, cfg.per_alpha, cfg.epsilon_per)
        self.positives = 0
        self.epoch = 0
        self.relabel_stats = {}

    @property
    def view(self) -> _View:
        return _View(self.curriculum.spec if self.curriculum is not None else None)

    @property
    def layer_index(self) -> int:
        return self.curriculum.layer if self.curriculum is not None else 0

    def collect(self) -> None:
        view = self.view
        thr = view.threshold(self.env)
        trace = run_episode(self.agent, self.env, view, self.rngs["env"], self.rngs["exploration"])
        batch = relabel_episode(trace, self.her, self.grid, thr, self.rngs["relabel"], self.relabel_stats)
        self.positives = count_positive(batch.reward, self.positives)
        self.buffer.store_batch(batch)

    def optimize(self) -> None:
        rng = self.rngs["sampler"]
        for _ in range(self.cfg.opt_steps_per_cycle):
            batch, slots, gens = self.buffer.sample(self.cfg.batch_size, rng)
            _, _, td = self.agent.train_step(batch)
            self.buffer.update_priorities(slots, td, gens)

    def run_epoch(self) -> MetricsRow:
        cfg = self.cfg
        for _ in range(cfg.cycles_per_epoch):
            for _ in range(cfg.episodes_per_cycle):
                self.collect()
            self.optimize()
        self.epoch += 1
        hits = [] if self.curriculum is not None else None
        sr, dist, q0 = evaluate(self.agent, self.eval_env, cfg.eval_episodes, self.rngs["eval"], self.view, hits)
        row = MetricsRow(
            epoch=self.epoch, success_rate=sr, mean_final_distance=dist, estimated_q0=q0,
            positive_reward_count=self.positives, kl_distance=kl_distance(self.grid.q, self.grid.q_star),
            epsilon=self.agent.epsilon, sigma=self.grid.sigma, layer_index=self.layer_index,
        )
        # schedules step once per epoch, so the row shows the values this epoch ran with
        self.agent.decay_epsilon()
        self.grid.decay_sigma()
        if self.curriculum is not None:
            for h in hits:
                self.curriculum.record(h)
            if self.curriculum.ready():
                self._advance()
        return row

    def _advance(self) -> None:
        # the new layer's grid starts its kernel schedule from the top
        _, self.buffer, self.grid = advance_layer(
            self.agent, self.buffer, self.curriculum, self.cfg.critic_mode, self.rngs["curriculum"],
            self.cfg.grid_kwargs(),
        )
        self.agent.input_fn = layer_input_fn(self.curriculum.spec)
        log.info("epoch %d: advanced to layer %d (%s)", self.epoch, self.curriculum.layer, self.curriculum.spec.name)


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> str:
    """Train, writing metrics.csv (rewritten after every epoch) and manifest.txt. Returns the metrics path."""
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(cfg, os.path.join(out_dir, "manifest.txt"))
    path = os.path.join(out_dir, "metrics.csv")
    rows = []
    emit_metrics(rows, path)
    if cfg.epochs == 0:
        return path
    trainer = Trainer(cfg)
    for _ in range(cfg.epochs):
        rows.append(trainer.run_epoch())
        emit_metrics(rows, path)
        r = rows[-1]
        log.info("epoch %d success %.3f q0 %.3f positives %d", r.epoch, r.success_rate, r.estimated_q0,
                 r.positive_reward_count)
    return path
