"""Goal-conditioned DDPG: actor/critic over state||goal inputs with target networks."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np

from .nn import GradClipPolicy, Mlp, soft_update
from .replay import Transitions

GREEDY, GAUSSIAN, UNIFORM = "greedy", "gaussian", "uniform"


@dataclass
class DdpgConfig:
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
    # Gaussian branch std as a fraction of each action component's range
    noise_scale: float = 0.05
    gaussian_share: float = 0.8
    clip_targets: bool = True
    batch_norm: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 <= self.epsilon_final <= self.epsilon <= 1.0:
            raise ValueError("need 0 <= epsilon_final <= epsilon <= 1")


def exploration_branch(eps: float, rng, gaussian_share: float = 0.8) -> str:
    """Pick greedy with prob 1 - eps, Gaussian with 0.8 eps, uniform with 0.2 eps."""
    u = rng.random()
    if u < 1.0 - eps:
        return GREEDY
    if u < 1.0 - eps + gaussian_share * eps:
        return GAUSSIAN
    return UNIFORM


def clip_target_range(y, gamma: float):
    """Clip TD targets to the return range reachable with rewards in {0, -1}."""
    return np.clip(y, -1.0 / (1.0 - gamma), 0.0)


def concat_input(state, goal):
    return np.concatenate([state, goal], axis=-1)


class DdpgAgent:
    """Actor mu(x) in tanh units and critic Q(x, u) with u the normalized action.

    ``x`` is the network input built by ``input_fn(state, goal)``; plain
    concatenation by default, replaced by the curriculum's slot layout for CHER.
    """

    def __init__(self, in_dim: int, action_low, action_high, cfg: DdpgConfig = None, rng=None, input_fn=None):
        self.cfg = cfg or DdpgConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        self.action_dim = len(self.action_low)
        self.in_dim = int(in_dim)
        self.input_fn = input_fn or concat_input
        h = list(self.cfg.hidden)
        acts = ["relu"] * len(h)
        self.actor = Mlp([self.in_dim] + h + [self.action_dim], acts + ["tanh"], rng=rng)
        self.critic = Mlp(
            [self.in_dim + self.action_dim] + h + [1], acts + ["linear"], rng=rng, batch_norm=self.cfg.batch_norm
        )
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.epsilon = self.cfg.epsilon
        self.clip = GradClipPolicy(self.cfg.clip_norm)
        self.train_steps = 0

    # action scaling

    @property
    def _mid(self):
        return (self.action_high + self.action_low) / 2

    @property
    def _half(self):
        return (self.action_high - self.action_low) / 2

    def to_action(self, u):
        return self._mid + self._half * u

    def to_unit(self, a):
        return (np.asarray(a, dtype=float) - self._mid) / self._half

    # acting

    def greedy(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        return self.to_action(self.actor.predict(x))

    def select_action(self, x, explore: bool = False, rng=None, return_branch: bool = False):
        a = self.greedy(x)
        branch = GREEDY
        if explore:
            branch = exploration_branch(self.epsilon, rng, self.cfg.gaussian_share)
            if branch == GAUSSIAN:
                sigma = self.cfg.noise_scale * (self.action_high - self.action_low)
                a = a + rng.normal(0.0, 1.0, self.action_dim) * sigma
            elif branch == UNIFORM:
                a = rng.uniform(self.action_low, self.action_high)
        a = np.clip(a, self.action_low, self.action_high)
        return (a, branch) if return_branch else a

    def decay_epsilon(self) -> float:
        self.epsilon = max(self.cfg.epsilon_decay * self.epsilon, self.cfg.epsilon_final)
        return self.epsilon

    def q_value(self, x, a=None, target: bool = False) -> np.ndarray:
        """Q(x, a); with ``a`` omitted the matching actor's greedy action is used."""
        actor = self.target_actor if target else self.actor
        critic = self.target_critic if target else self.critic
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = actor.predict(x) if a is None else self.to_unit(np.atleast_2d(a))
        return critic.predict(np.hstack([x, u]))[:, 0]

    # learning

    def inputs(self, batch: Transitions):
        return self.input_fn(batch.state, batch.goal), self.input_fn(batch.next_state, batch.goal)

    def td_targets(self, batch: Transitions) -> np.ndarray:
        if len(batch) == 0:
            raise ValueError("empty batch")
        _, x_next = self.inputs(batch)
        q_next = self.q_value(x_next, target=True)
        y = batch.reward + self.cfg.gamma * (1.0 - batch.success_terminal) * q_next
        if self.cfg.clip_targets:
            y = clip_target_range(y, self.cfg.gamma)
        return y

    def train_step(self, batch: Transitions):
        """One critic and one actor update, then soft target updates.

        Returns (critic_loss, actor_objective, td_errors) with td = y - Q before the update.
        """
        cfg = self.cfg
        n = len(batch)
        y = self.td_targets(batch)
        x, _ = self.inputs(batch)
        xa = np.hstack([x, self.to_unit(batch.action)])
        q, cache = self.critic.forward(xa, train=cfg.batch_norm)
        td = y - q[:, 0]
        critic_loss = float(np.mean(td * td))
        grads, _ = self.critic.backward(cache, (-2.0 / n * td)[:, None])
        self.critic.optimizer_step(grads, self.clip, cfg.lr_critic)

        u, a_cache = self.actor.forward(x)
        q_pi, c_cache = self.critic.forward(np.hstack([x, u]), train=cfg.batch_norm)
        actor_objective = float(np.mean(q_pi))
        # ascend mean Q: descend -Q; only the action slice flows back to the actor
        _, d_in = self.critic.backward(c_cache, np.full((n, 1), -1.0 / n))
        a_grads, _ = self.actor.backward(a_cache, d_in[:, self.in_dim:])
        self.actor.optimizer_step(a_grads, self.clip, cfg.lr_actor)

        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic, self.critic, cfg.tau)
        self.train_steps += 1
        return critic_loss, actor_objective, td

    # persistence

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for name in ("actor", "critic", "target_actor", "target_critic"):
            getattr(self, name).save(os.path.join(directory, name))
        with open(os.path.join(directory, "agent.txt"), "w") as f:
            for k, v in asdict(self.cfg).items():
                f.write(f"{k}={v}\n")
            f.write(f"epsilon={self.epsilon!r}\n")
            f.write(f"in_dim={self.in_dim}\n")
            f.write("action_low=" + ",".join(repr(float(v)) for v in self.action_low) + "\n")
            f.write("action_high=" + ",".join(repr(float(v)) for v in self.action_high) + "\n")

    def load_networks(self, directory: str) -> None:
        for name in ("actor", "critic", "target_actor", "target_critic"):
            setattr(self, name, Mlp.load(os.path.join(directory, name)))
