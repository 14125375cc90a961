"""Hindsight relabeling: future-strategy goals, the already-achieved filter, and
instructive goal selection over a discretized goal grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erf, erfc

from .envs.core import Rect, compute_reward
from .replay import Transitions

STRATEGIES = ("future", "ibs")
ARCHITECTURES = ("simultaneous", "sequential")
KL_SMOOTHING = 1e-9


@dataclass
class HerConfig:
    k: int = 4
    strategy: str = "future"
    filter_on: bool = False
    weight_floor: float = 0.002
    # sequential: goals weighted by relevance (q_star) alone, novelty left to PER
    architecture: str = "simultaneous"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.weight_floor <= 0:
            raise ValueError("weight_floor must be positive")


@dataclass
class EpisodeTrace:
    """One episode: states s_0..s_T and achieved goals of each of them.

    Transition t goes s_t -> s_{t+1} under actions[t]; ``achieved[t + 1]`` is the
    achieved goal of its next state. ``goal`` is one real goal for the whole
    episode, or one per transition when the goal moves (curriculum layers).
    """

    states: np.ndarray
    actions: np.ndarray
    achieved: np.ndarray
    goal: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        self.achieved = np.asarray(self.achieved, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        T = len(self.actions)
        if len(self.states) != T + 1 or len(self.achieved) != T + 1:
            raise ValueError("states and achieved need one more entry than actions")
        if self.goal.ndim == 2 and len(self.goal) != T:
            raise ValueError("per-step goals need one entry per action")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def achieved_next(self) -> np.ndarray:
        return self.achieved[1:]


def _interval_mass(lo, hi, center, sigma):
    """erf(b) - erf(a) for the standardized interval, stable far out in the tails."""
    s = sigma * math.sqrt(2.0)
    a = (np.asarray(lo) - center) / s
    b = (np.asarray(hi) - center) / s
    return np.where(
        a >= 0, erfc(a) - erfc(b), np.where(b <= 0, erfc(-b) - erfc(-a), erf(b) - erf(a))
    )


def kernel_score(g, region: Rect, sigma: float):
    """Integral of exp(-|g - x|^2 / (2 sigma^2)) over ``region``, constants dropped.

    ``g`` may be a single point or an (n, 2) array.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = np.asarray(g, dtype=float)
    mx = _interval_mass(region.x_lo, region.x_hi, g[..., 0], sigma)
    my = _interval_mass(region.y_lo, region.y_hi, g[..., 1], sigma)
    return mx * my


class VirtualGoalGrid:
    """M x N cells over the unit screen holding target q_star and proposal q."""

    def __init__(self, goal_region: Rect, sigma: float = 1.0, sigma_final: float = 0.2, M: int = 20, N: int = 20,
                 decay: float = 0.9, decay_mode: str = "variance"):
        if M < 1 or N < 1:
            raise ValueError("grid needs at least one cell per axis")
        if goal_region.area <= 0:
            raise ValueError("goal region has zero area")
        if not sigma >= sigma_final > 0:
            raise ValueError("need sigma >= sigma_final > 0")
        if decay_mode not in ("variance", "std"):
            raise ValueError("decay_mode must be 'variance' or 'std'")
        self.goal_region = goal_region
        self.M, self.N = int(M), int(N)
        self.sigma = float(sigma)
        self.sigma_final = float(sigma_final)
        self.decay = float(decay)
        self.decay_mode = decay_mode
        self.counts = np.zeros((self.M, self.N), dtype=np.int64)
        self.count = 0
        self.q_star = self._target()

    def cell_centers(self):
        cx = (np.arange(self.M) + 0.5) / self.M
        cy = (np.arange(self.N) + 0.5) / self.N
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def _target(self) -> np.ndarray:
        mu = kernel_score(self.cell_centers(), self.goal_region, self.sigma)
        return mu / mu.sum()

    @property
    def q(self) -> np.ndarray:
        return self.counts / max(self.count, 1)

    def cells(self, goals):
        g = np.atleast_2d(np.asarray(goals, dtype=float))
        i = np.clip(np.floor(g[:, 0] * self.M).astype(np.int64), 0, self.M - 1)
        j = np.clip(np.floor(g[:, 1] * self.N).astype(np.int64), 0, self.N - 1)
        return i, j

    def record(self, goals) -> None:
        i, j = self.cells(goals)
        np.add.at(self.counts, (i, j), 1)
        self.count += len(i)

    def decay_sigma(self) -> float:
        """One schedule step; q and count stay as they are."""
        factor = math.sqrt(self.decay) if self.decay_mode == "variance" else self.decay
        self.sigma = max(self.sigma * factor, self.sigma_final)
        self.q_star = self._target()
        return self.sigma

    def reset_proposal(self) -> None:
        self.counts[:] = 0
        self.count = 0


def build_target_grid(goal_region: Rect, sigma: float, M: int = 20, N: int = 20, sigma_final: Optional[float] = None):
    return VirtualGoalGrid(goal_region, sigma, sigma if sigma_final is None else sigma_final, M, N)


def record_virtual_goal(grid: VirtualGoalGrid, g) -> None:
    grid.record(g)


def vg_weights(grid: VirtualGoalGrid, candidates, weight_floor: float = 0.002, relevance_only: bool = False):
    """Sampling probabilities for candidate goals: max(q_star - q, floor), normalized."""
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(cand) == 0:
        raise ValueError("no candidates")
    i, j = grid.cells(cand)
    if relevance_only:
        w = np.maximum(grid.q_star[i, j], weight_floor)
    else:
        w = np.maximum(grid.q_star[i, j] - grid.q[i, j], weight_floor)
    return w / w.sum()


def filter_check(achieved_t, g_virtual, threshold: float):
    """Keep a virtual goal only if the pre-transition state has not already achieved it."""
    return compute_reward(achieved_t, g_virtual, threshold) == -1.0


def kl_distance(q, q_star) -> float:
    p = np.ravel(np.asarray(q, dtype=float)) + KL_SMOOTHING
    r = np.ravel(np.asarray(q_star, dtype=float)) + KL_SMOOTHING
    if p.shape != r.shape:
        raise ValueError("distributions must have equal length")
    p /= p.sum()
    r /= r.sum()
    return float(np.sum(p * np.log(p / r)))


def _batch(states, next_states, goals, actions, rewards, virtual: bool) -> Transitions:
    n = len(rewards)
    return Transitions(
        state=states, goal=goals, action=actions, reward=rewards, next_state=next_states,
        success_terminal=rewards == 0.0, is_virtual=np.full(n, virtual),
    )


def relabel_episode(trace: EpisodeTrace, cfg: HerConfig, grid: Optional[VirtualGoalGrid], threshold: float, rng,
                    stats: Optional[dict] = None) -> Transitions:
    """Real transitions plus up to k hindsight copies per step.

    Virtual goals for step t are drawn with replacement from the achieved goals
    of later steps. With the ibs strategy they are drawn by vg_weights; every
    stored virtual goal is recorded into ``grid`` (when given, for any strategy).
    """
    if cfg.strategy == "ibs" and grid is None:
        raise ValueError("ibs strategy needs a goal grid")
    T = len(trace)
    ag = trace.achieved
    states, next_states = trace.states[:-1], trace.states[1:]
    goals = trace.goal if trace.goal.ndim == 2 else np.repeat(trace.goal[None, :], T, axis=0)
    real_r = compute_reward(ag[1:], goals, threshold)
    out = [_batch(states, next_states, goals, trace.actions, np.atleast_1d(real_r), False)]
    drawn = kept = 0
    idx_s, v_goals = [], []
    for t in range(T - 1):
        if cfg.k == 0:
            break
        pool = ag[t + 2:]
        if cfg.strategy == "ibs":
            p = vg_weights(grid, pool, cfg.weight_floor, relevance_only=cfg.architecture == "sequential")
            pick = rng.choice(len(pool), size=cfg.k, replace=True, p=p)
        else:
            pick = rng.integers(0, len(pool), size=cfg.k)
        cand = pool[pick]
        drawn += len(cand)
        if cfg.filter_on:
            cand = cand[np.atleast_1d(filter_check(ag[t], cand, threshold))]
        if len(cand) == 0:
            continue
        kept += len(cand)
        if grid is not None:
            grid.record(cand)
        idx_s.extend([t] * len(cand))
        v_goals.append(cand)
    if v_goals:
        idx = np.array(idx_s)
        vg = np.concatenate(v_goals)
        vr = np.atleast_1d(compute_reward(ag[idx + 1], vg, threshold))
        out.append(_batch(states[idx], next_states[idx], vg, trace.actions[idx], vr, True))
    if stats is not None:
        stats["drawn"] = stats.get("drawn", 0) + drawn
        stats["kept"] = stats.get("kept", 0) + kept
    return Transitions.concat(out)
