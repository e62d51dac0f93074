"""DQN-family learners: DQL, Double DQL, Dueling DQL and prioritized-replay DQL."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .. import nn
from ..errors import RejectedInputError, TrainingDivergedError
from .replay import (
    Batch,
    PerConfig,
    SumTree,
    Transition,
    UniformReplay,
    is_weights,
    per_push,
    per_sample,
    per_update_priorities,
)


class Variant(str, Enum):
    DQL = "dql"
    DDQL = "ddql"
    DUELING = "dueling"
    PER = "per"


@dataclass(frozen=True)
class LinearSchedule:
    """Linear interpolation from ``start`` to ``end`` over ``steps``, then flat."""

    start: float
    end: float
    steps: float

    def __call__(self, t: float) -> float:
        if self.steps <= 0 or t >= self.steps:
            return self.end
        frac = t / self.steps
        return self.start + frac * (self.end - self.start)


@dataclass(frozen=True)
class AgentConfig:
    variant: Variant = Variant.DQL
    gamma: float = 0.8
    lr: float = 0.2
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    batch_size: int = 32
    capacity: int = 15000
    target_sync: int = 50
    grad_clip: float = 10.0
    hidden: tuple[int, ...] = (128, 128)
    dueling_trunk: int = 128
    dueling_head: int = 64
    per: PerConfig = field(default_factory=PerConfig)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0 <= self.gamma < 1:
            raise RejectedInputError("gamma must lie in [0, 1)")
        if self.lr < 0:
            raise RejectedInputError("lr must be >= 0")
        if not (0 <= self.epsilon_end <= self.epsilon_start <= 1):
            raise RejectedInputError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0 <= self.epsilon_decay_fraction <= 1:
            raise RejectedInputError("epsilon_decay_fraction must lie in [0, 1]")
        if self.batch_size < 1 or self.capacity < self.batch_size or self.target_sync < 1:
            raise RejectedInputError("need batch_size >= 1, capacity >= batch_size, target_sync >= 1")


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Random action with probability ``epsilon``, else the first argmax.

    Always consumes one uniform draw, plus one integer draw when exploring.
    """
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise RejectedInputError("empty q_values")
    if not 0 <= epsilon <= 1:
        raise RejectedInputError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def _checked(q: np.ndarray, rows=None) -> np.ndarray:
    check = q if rows is None else q[rows]
    if not np.all(np.isfinite(check)):
        raise TrainingDivergedError("network produced non-finite Q-values")
    return q


def compute_targets(batch: Batch, online: nn.QNetworkParams, target: nn.QNetworkParams, gamma: float,
                    variant: Variant) -> np.ndarray:
    """Bootstrapped targets ``y_j``; terminal rows get ``y_j = r_j`` whatever their next state.

    Double DQL picks the next action with ``online`` and evaluates it with
    ``target``; the other variants take the max of ``target``.
    """
    variant = Variant(variant)
    live = ~batch.terminals
    y = batch.rewards.astype(np.float64).copy()
    if not live.any():
        return y
    nxt = batch.next_states[live]
    q_next = _checked(nn.q_values(target, nxt))
    if variant is Variant.DDQL:
        choice = np.argmax(_checked(nn.q_values(online, nxt)), axis=1)
        boot = q_next[np.arange(len(nxt)), choice]
    else:
        boot = q_next.max(axis=1)
    y[live] = batch.rewards[live] + gamma * boot
    return y


def td_errors(batch: Batch, online, target, gamma, variant) -> np.ndarray:
    y = compute_targets(batch, online, target, gamma, variant)
    q = _checked(nn.q_values(online, batch.states))
    return np.abs(y - q[np.arange(len(batch)), batch.actions])


def td_error(transition: Transition, online, target, gamma, variant) -> float:
    """``|y - Q(s, a)|`` for a single transition under ``variant``'s target rule."""
    return float(td_errors(Batch.from_transitions([transition]), online, target, gamma, variant)[0])


@dataclass
class TrainStats:
    loss: float
    mean_td_error: float


class Agent:
    """Prediction and target networks plus a replay buffer for one DQN variant.

    Exploration and the IS-exponent anneal follow training progress measured
    in episodes: ``begin_episode(i)`` out of ``total_episodes``. Episodes that
    end in a collision are short, so a step-count schedule would barely move
    within a desk-sized run.
    """

    def __init__(self, config: AgentConfig, obs_dim: int, n_actions: int, rng: np.random.Generator,
                 total_episodes: int = 1000, init_rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng
        init_rng = rng if init_rng is None else init_rng
        if config.variant is Variant.DUELING:
            self.online = nn.default_dueling(init_rng, obs_dim, n_actions, config.dueling_trunk, config.dueling_head)
        else:
            self.online = nn.default_plain(init_rng, obs_dim, n_actions, config.hidden)
        self.target = nn.copy_params(self.online)
        self.buffer = SumTree(config.capacity) if config.variant is Variant.PER else UniformReplay(config.capacity)
        self.total_episodes = total_episodes
        self.epsilon_schedule = LinearSchedule(
            config.epsilon_start, config.epsilon_end, config.epsilon_decay_fraction * total_episodes)
        self.lam_schedule = LinearSchedule(config.per.lam_start, config.per.lam_end, total_episodes)
        self.episode = 0
        self.act_steps = 0
        self.train_steps = 0

    def begin_episode(self, index: int) -> None:
        self.episode = int(index)

    @property
    def epsilon(self) -> float:
        return self.epsilon_schedule(self.episode)

    @property
    def lam(self) -> float:
        return self.lam_schedule(self.episode)

    def greedy_action(self, obs) -> int:
        return int(np.argmax(nn.q_values(self.online, obs)[0]))

    def act(self, obs) -> int:
        """Epsilon-greedy action for a training step; advances the exploration schedule."""
        q = nn.q_values(self.online, obs)[0]
        action = epsilon_greedy(q, self.epsilon, self.rng)
        self.act_steps += 1
        return action

    def remember(self, transition: Transition) -> None:
        if isinstance(self.buffer, SumTree):
            per_push(self.buffer, transition)
        else:
            self.buffer.push(transition)

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def train_step(self) -> TrainStats | None:
        """One minibatch update; ``None`` (and no change) while the buffer holds fewer than k items."""
        if not self.ready():
            return None
        cfg = self.config
        k = cfg.batch_size
        if cfg.variant is Variant.PER:
            batch, leaves, probs = per_sample(self.buffer, k, self.rng)
            weights = is_weights(probs, len(self.buffer), self.lam)
        else:
            batch, _ = self.buffer.sample(k, self.rng)
            weights = np.ones(k)

        y = compute_targets(batch, self.online, self.target, cfg.gamma, cfg.variant)
        loss, grads = nn.loss_and_grad(self.online, batch.states, batch.actions, y, weights)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at train step {self.train_steps}")
        q = nn.q_values(self.online, batch.states)
        deltas = np.abs(y - q[np.arange(k), batch.actions])

        nn.clip_grad_norm(grads, cfg.grad_clip)
        self.online = nn.sgd_step(self.online, grads, cfg.lr)
        if cfg.variant is Variant.PER:
            per_update_priorities(self.buffer, leaves, deltas, cfg.per)

        self.train_steps += 1
        if self.train_steps % cfg.target_sync == 0:
            self.target = nn.copy_params(self.online)
        return TrainStats(loss, float(deltas.mean()))
