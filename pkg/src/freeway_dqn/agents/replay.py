"""Experience storage: a uniform ring buffer and a sum-tree prioritized buffer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateDistributionError, RejectedInputError


@dataclass(frozen=True)
class PerConfig:
    """Prioritization exponent ``psi``, IS exponent annealed ``lam_start -> lam_end``, priority floor ``eps``."""

    psi: float = 0.6
    lam_start: float = 0.4
    lam_end: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        if self.psi < 0 or self.eps <= 0:
            raise RejectedInputError("need psi >= 0 and eps > 0")
        if not (0 <= self.lam_start <= 1 and 0 <= self.lam_end <= 1):
            raise RejectedInputError("IS exponents must lie in [0, 1]")


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        return cls(
            np.array([t.state for t in transitions], dtype=np.float64),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=np.float64),
            np.array([t.next_state for t in transitions], dtype=np.float64),
            np.array([t.terminal for t in transitions], dtype=bool),
        )


class _Store:
    """Fixed-capacity ring of transitions kept as parallel arrays."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise RejectedInputError("capacity must be >= 1")
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self._states = None

    def _alloc(self, dim):
        n = self.capacity
        self._states = np.zeros((n, dim))
        self._next = np.zeros((n, dim))
        self._actions = np.zeros(n, dtype=np.int64)
        self._rewards = np.zeros(n)
        self._terminals = np.zeros(n, dtype=bool)

    def write(self, t: Transition) -> int:
        state = np.asarray(t.state, dtype=np.float64)
        if self._states is None:
            self._alloc(state.shape[0])
        slot = self.cursor
        self._states[slot] = state
        self._next[slot] = t.next_state
        self._actions[slot] = t.action
        self._rewards[slot] = t.reward
        self._terminals[slot] = t.terminal
        self.cursor = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def batch(self, idx) -> Batch:
        idx = np.asarray(idx, dtype=np.int64)
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx], self._next[idx],
                     self._terminals[idx])

    def get(self, slot: int) -> Transition:
        if not 0 <= slot < self.size:
            raise IndexError(slot)
        return Transition(self._states[slot].copy(), int(self._actions[slot]), float(self._rewards[slot]),
                          self._next[slot].copy(), bool(self._terminals[slot]))

    def ordered(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        return [self.get((start + i) % self.capacity) for i in range(self.size)]


class UniformReplay:
    def __init__(self, capacity: int):
        self.store = _Store(capacity)

    @property
    def capacity(self):
        return self.store.capacity

    def __len__(self):
        return self.store.size

    def push(self, transition: Transition) -> int:
        return self.store.write(transition)

    def sample(self, k: int, rng: np.random.Generator) -> tuple[Batch, np.ndarray]:
        """``k`` slots drawn uniformly with replacement."""
        if len(self) == 0:
            raise RejectedInputError("cannot sample an empty buffer")
        idx = rng.integers(0, len(self), size=k)
        return self.store.batch(idx), idx

    def transitions(self) -> list[Transition]:
        return self.store.ordered()


class SumTree:
    """Binary tree of priority sums over a ring of transitions.

    Leaves hold the sampling priority of each slot (already raised to the
    prioritization exponent). Node ``i`` has children ``2i`` and ``2i+1``;
    the root is node 1 and leaves start at ``self.leaf0``. A parallel max
    tree tracks the largest stored priority.
    """

    def __init__(self, capacity: int):
        self.store = _Store(capacity)
        self.leaf0 = 1 << max(0, math.ceil(math.log2(capacity)))
        self.sums = np.zeros(2 * self.leaf0)
        self.maxes = np.zeros(2 * self.leaf0)

    @property
    def capacity(self):
        return self.store.capacity

    def __len__(self):
        return self.store.size

    @property
    def total(self) -> float:
        return float(self.sums[1])

    @property
    def max_priority(self) -> float:
        return float(self.maxes[1])

    def priority(self, leaf: int) -> float:
        return float(self.sums[self.leaf0 + leaf])

    def priorities(self) -> np.ndarray:
        return self.sums[self.leaf0:self.leaf0 + len(self)].copy()

    def set(self, leaf: int, priority: float) -> None:
        if not 0 <= leaf < self.capacity:
            raise RejectedInputError(f"leaf {leaf} out of range")
        if not (priority >= 0 and math.isfinite(priority)):
            raise RejectedInputError(f"priority must be finite and >= 0, got {priority}")
        i = self.leaf0 + leaf
        self.sums[i] = self.maxes[i] = priority
        i //= 2
        while i:
            left, right = 2 * i, 2 * i + 1
            self.sums[i] = self.sums[left] + self.sums[right]
            self.maxes[i] = max(self.maxes[left], self.maxes[right])
            i //= 2

    def find(self, mass: float) -> int:
        """Leaf whose cumulative-priority interval contains ``mass`` (``0 <= mass < total``).

        Never descends into an all-zero subtree, so rounding at the right edge
        cannot land on an empty slot.
        """
        i = 1
        sums = self.sums
        while i < self.leaf0:
            left = 2 * i
            if mass < sums[left] or sums[left + 1] <= 0.0:
                i = left
            else:
                mass -= sums[left]
                i = left + 1
        return i - self.leaf0

    def rebuild(self) -> None:
        for i in range(self.leaf0 - 1, 0, -1):
            self.sums[i] = self.sums[2 * i] + self.sums[2 * i + 1]
            self.maxes[i] = max(self.maxes[2 * i], self.maxes[2 * i + 1])

    def transitions(self) -> list[Transition]:
        return self.store.ordered()


def per_push(tree: SumTree, transition: Transition) -> int:
    """Store with the current maximal priority (1.0 for an empty tree)."""
    priority = tree.max_priority if len(tree) else 1.0
    leaf = tree.store.write(transition)
    tree.set(leaf, priority)
    return leaf


def per_sample(tree: SumTree, k: int, rng: np.random.Generator):
    """Stratified proportional sampling: one uniform draw in each of ``k`` equal mass segments.

    Returns ``(batch, leaves, probabilities)`` where ``probabilities[j]`` is
    the current probability of drawing ``leaves[j]`` in a single draw.
    """
    total = tree.total
    if len(tree) == 0 or not total > 0:
        raise DegenerateDistributionError("all priorities are zero")
    segment = total / k
    below_total = math.nextafter(total, 0.0)
    leaves = np.empty(k, dtype=np.int64)
    for j in range(k):
        mass = min((j + rng.random()) * segment, below_total)
        leaves[j] = tree.find(mass)
    probs = tree.sums[tree.leaf0 + leaves] / total
    return tree.store.batch(leaves), leaves, probs


def is_weights(probabilities, size: int, lam: float) -> np.ndarray:
    """Importance weights ``(size * P)^-lam`` scaled so the batch maximum is 1."""
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p <= 0):
        raise RejectedInputError("probabilities must be positive")
    raw = (1.0 / (size * p)) ** lam
    return raw / raw.max()


def per_update_priorities(tree: SumTree, leaves, deltas, per: PerConfig) -> None:
    """Write back ``(|delta| + eps) ** psi`` for each sampled leaf."""
    for leaf, delta in zip(np.asarray(leaves).tolist(), np.asarray(deltas, dtype=np.float64).tolist()):
        if not 0 <= leaf < len(tree):
            raise RejectedInputError(f"leaf {leaf} is not occupied")
        tree.set(leaf, (abs(delta) + per.eps) ** per.psi)
