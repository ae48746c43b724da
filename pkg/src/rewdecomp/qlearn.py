"""Tabular Q-learning pieces for the sampled trainer: Q-tables, replay, epsilon-greedy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import DecompositionParams
from .planner import DeterministicPolicy, greedy


@dataclass
class PolicySet:
    """One Q-table per factor, stored as a single (n, S, A) array."""

    q: np.ndarray
    learning_rate: float = 0.1
    versions: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        if self.q.ndim != 3:
            raise ValueError("q must have shape (n, S, A)")
        if not self.versions:
            self.versions = [0] * self.q.shape[0]

    @classmethod
    def zeros(cls, n_factors: int, n_states: int, n_actions: int, learning_rate: float = 0.1):
        return cls(np.zeros((n_factors, n_states, n_actions)), learning_rate)

    @property
    def n_factors(self) -> int:
        return self.q.shape[0]

    def greedy_action(self, i: int, s: int) -> int:
        return int(greedy(self.q[i, s]))

    def greedy_policies(self) -> list[DeterministicPolicy]:
        return [DeterministicPolicy(greedy(table)) for table in self.q]


class ReplayBuffer:
    """Fixed-capacity FIFO ring of (s, a, r_env, s2) transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data = np.zeros((capacity, 4))
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, s: int, a: int, r: float, s2: int) -> None:
        self._data[self._next] = (s, a, r, s2)
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def contents(self) -> np.ndarray:
        """Stored transitions, oldest first."""
        if self._size < self.capacity:
            return self._data[: self._size].copy()
        return np.roll(self._data, -self._next, axis=0)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        rows = self._data[idx]
        return (rows[:, 0].astype(int), rows[:, 1].astype(int), rows[:, 2], rows[:, 3].astype(int))


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.01
    horizon: int = 10_000

    def __post_init__(self):
        if not 0.0 <= self.end <= self.start <= 1.0:
            raise ValueError("need 0 <= end <= start <= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


def epsilon_at(schedule: EpsilonSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    if schedule.horizon == 0 or t >= schedule.horizon:
        return schedule.end
    frac = t / schedule.horizon
    return schedule.start + frac * (schedule.end - schedule.start)


def epsilon_greedy_action(q_table: np.ndarray, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else greedy (lowest index on ties).

    Always consumes exactly two draws so the stream stays aligned across calls.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    explore, pick = rng.random(2)
    row = q_table[s]
    if explore < epsilon:
        return min(int(pick * len(row)), len(row) - 1)
    return int(greedy(row))


def q_minibatch_update(policy_set: PolicySet, i: int, batch, params: DecompositionParams | None,
                       discount: float, env_reward: np.ndarray | None = None) -> np.ndarray:
    """One tabular Q-learning sweep over a minibatch for factor ``i``.

    Rewards are relabelled to R_i(s2) from ``params`` and the environment
    reward of the next state.  Duplicate (s, a) pairs in a batch accumulate.
    With ``params`` None the stored environment reward is used as is.
    """
    s, a, r, s2 = batch
    if len(s) == 0:
        raise ValueError("batch must be non-empty")
    if params is not None:
        if env_reward is None:
            raise ValueError("env_reward is needed to relabel rewards")
        r = env_reward[s2] * params.shares()[s2, i]
    q = policy_set.q[i]
    target = r + discount * q[s2].max(axis=1)
    td = target - q[s, a]
    np.add.at(q, (s, a), policy_set.learning_rate * td)
    policy_set.versions[i] += 1
    return q
