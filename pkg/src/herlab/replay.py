"""Prioritized replay: columnar ring storage with sum/max trees over priorities."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np


@dataclass
class Transition:
    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    success_terminal: bool = False
    is_virtual: bool = False


@dataclass
class Transitions:
    """A batch of transitions, one array per field (leading axis = batch)."""

    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    success_terminal: np.ndarray
    is_virtual: np.ndarray

    def __len__(self) -> int:
        return len(self.reward)

    def __getitem__(self, i) -> Transition:
        return Transition(
            self.state[i], self.goal[i], self.action[i], float(self.reward[i]),
            self.next_state[i], bool(self.success_terminal[i]), bool(self.is_virtual[i]),
        )

    @classmethod
    def from_list(cls, items) -> "Transitions":
        items = list(items)
        if not items:
            raise ValueError("empty transition list")
        return cls(
            state=np.array([t.state for t in items], dtype=float),
            goal=np.array([t.goal for t in items], dtype=float),
            action=np.array([t.action for t in items], dtype=float),
            reward=np.array([t.reward for t in items], dtype=float),
            next_state=np.array([t.next_state for t in items], dtype=float),
            success_terminal=np.array([t.success_terminal for t in items], dtype=bool),
            is_virtual=np.array([t.is_virtual for t in items], dtype=bool),
        )

    @classmethod
    def concat(cls, batches) -> "Transitions":
        batches = [b for b in batches if b is not None and len(b)]
        if not batches:
            raise ValueError("nothing to concatenate")
        return cls(**{f.name: np.concatenate([getattr(b, f.name) for b in batches]) for f in fields(cls)})

    def select(self, mask_or_idx) -> "Transitions":
        return Transitions(**{f.name: getattr(self, f.name)[mask_or_idx] for f in fields(self)})


class _Tree:
    """Complete binary tree over a power-of-two number of leaves, combined with ``op``."""

    def __init__(self, capacity: int, op):
        self.leaves = 1
        while self.leaves < capacity:
            self.leaves *= 2
        self.op = op
        self.data = np.zeros(2 * self.leaves)

    def set(self, idx, values) -> None:
        pos = np.asarray(idx, dtype=np.int64) + self.leaves
        self.data[pos] = values
        pos = np.unique(pos // 2)
        while pos[0] >= 1:
            self.data[pos] = self.op(self.data[2 * pos], self.data[2 * pos + 1])
            if pos[0] == 1:
                break
            pos = np.unique(pos // 2)

    @property
    def root(self) -> float:
        return float(self.data[1])

    def leaf_values(self, n: int) -> np.ndarray:
        return self.data[self.leaves:self.leaves + n]


class PriorityBuffer:
    """FIFO ring of transitions sampled with probability priority^alpha / total.

    Priorities are |td_error| + epsilon_per. New items enter at the current
    maximum priority (1.0 when empty). No importance-sampling weights.
    """

    def __init__(self, capacity: int = 1_000_000, alpha: float = 0.6, epsilon_per: float = 0.01):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if epsilon_per <= 0:
            raise ValueError("epsilon_per must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.epsilon_per = float(epsilon_per)
        self._sum = _Tree(self.capacity, np.add)
        self._max = _Tree(self.capacity, np.maximum)
        self.priority = np.zeros(self.capacity)
        self.generation = np.zeros(self.capacity, dtype=np.int64)
        self._cols: Optional[dict] = None
        self.next_slot = 0
        self.size = 0
        self.total_stored = 0
        self.stale_updates = 0

    def __len__(self) -> int:
        return self.size

    def _allocate(self, batch: Transitions) -> None:
        self._cols = {}
        for f in fields(Transitions):
            col = getattr(batch, f.name)
            self._cols[f.name] = np.zeros((self.capacity,) + col.shape[1:], dtype=col.dtype)

    @property
    def max_priority(self) -> float:
        return self._max.root if self.size else 1.0

    def store(self, t: Transition) -> None:
        self.store_batch(Transitions.from_list([t]))

    def store_batch(self, batch: Transitions) -> np.ndarray:
        """Append a batch in order; returns the slots written."""
        n = len(batch)
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        if self._cols is None:
            self._allocate(batch)
        if n > self.capacity:
            batch = batch.select(slice(n - self.capacity, n))
            self.total_stored += n - self.capacity
            n = self.capacity
        p = self.max_priority
        slots = (self.next_slot + np.arange(n)) % self.capacity
        for name, col in self._cols.items():
            col[slots] = getattr(batch, name)
        self.generation[slots] += 1
        self.priority[slots] = p
        self._sum.set(slots, p**self.alpha)
        self._max.set(slots, p)
        self.next_slot = int((self.next_slot + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)
        self.total_stored += n
        return slots

    def get(self, slots) -> Transitions:
        if self._cols is None:
            raise IndexError("buffer is empty")
        slots = np.asarray(slots, dtype=np.int64)
        return Transitions(**{name: col[slots] for name, col in self._cols.items()})

    def probabilities(self) -> np.ndarray:
        w = self._sum.leaf_values(self.size)
        return w / w.sum()

    def sample(self, n: int, rng):
        """Draw ``n`` slots with replacement. Returns (batch, slots, generations)."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        total = self._sum.root
        u = rng.uniform(0.0, total, size=n)
        idx = np.ones(n, dtype=np.int64)
        data = self._sum.data
        while idx[0] < self._sum.leaves:
            left = data[2 * idx]
            right = u >= left
            u = np.where(right, u - left, u)
            idx = 2 * idx + right
        slots = idx - self._sum.leaves
        # rounding can push a draw onto an empty leaf past the end
        slots = np.minimum(slots, self.size - 1)
        return self.get(slots), slots, self.generation[slots].copy()

    def update_priorities(self, slots, td_errors, generations=None) -> int:
        """Set priority = |td| + epsilon_per. Slots overwritten since sampling are skipped.

        Returns how many updates were applied.
        """
        slots = np.asarray(slots, dtype=np.int64)
        td = np.abs(np.asarray(td_errors, dtype=float))
        if slots.shape != td.shape:
            raise ValueError("slots and td_errors must align")
        ok = (slots >= 0) & (slots < self.size)
        if generations is not None:
            ok &= self.generation[np.clip(slots, 0, self.capacity - 1)] == np.asarray(generations)
        self.stale_updates += int((~ok).sum())
        slots, td = slots[ok], td[ok]
        if len(slots) == 0:
            return 0
        # duplicates: last write wins, as with a sequential loop
        _, last = np.unique(slots[::-1], return_index=True)
        keep = len(slots) - 1 - last
        slots, p = slots[keep], td[keep] + self.epsilon_per
        self.priority[slots] = p
        self._sum.set(slots, p**self.alpha)
        self._max.set(slots, p)
        return len(slots)

    def clear(self) -> None:
        self.__init__(self.capacity, self.alpha, self.epsilon_per)
