"""Finite MDPs with state rewards, the corner gridworld family and a resettable simulator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

# Gridworld action indices.
LEFT, RIGHT, UP, DOWN = 0, 1, 2, 3
ACTION_NAMES = ("left", "right", "up", "down")
_MOVES = {LEFT: (-1, 0), RIGHT: (1, 0), UP: (0, -1), DOWN: (0, 1)}

_STOCHASTIC_TOL = 1e-12


class MdpValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """The tuple <S, A, R, T, gamma> plus a start distribution.

    ``transition[s, a, s2]`` is the probability of moving to ``s2``; ``reward[s]``
    is collected when the agent occupies ``s``.  Arrays are made read-only on
    construction so instances can be shared freely.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    start_distribution: np.ndarray
    grid_shape: tuple[int, int] | None = None  # (width, height) for gridworlds

    def __post_init__(self):
        transition = np.array(self.transition, dtype=float)
        reward = np.array(self.reward, dtype=float)
        start = np.array(self.start_distribution, dtype=float)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise MdpValidationError(f"transition must have shape (S, A, S), got {transition.shape}")
        n_states, n_actions, _ = transition.shape
        if n_states < 1 or n_actions < 1:
            raise MdpValidationError("need at least one state and one action")
        if reward.shape != (n_states,):
            raise MdpValidationError(f"reward must have shape ({n_states},), got {reward.shape}")
        if start.shape != (n_states,):
            raise MdpValidationError(f"start_distribution must have shape ({n_states},)")
        check_stochastic(transition)
        if not np.all(np.isfinite(reward)):
            raise MdpValidationError("reward entries must be finite")
        if np.any(start < 0) or abs(start.sum() - 1.0) > _STOCHASTIC_TOL:
            raise MdpValidationError("start_distribution must be a probability vector")
        if not 0.0 <= self.discount < 1.0:
            raise MdpValidationError(f"discount must lie in [0, 1), got {self.discount}")
        for arr in (transition, reward, start):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "start_distribution", start)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def r_max(self) -> float:
        return float(self.reward.max())

    def with_reward(self, reward) -> "TabularMdp":
        return replace(self, reward=np.asarray(reward, dtype=float))

    def cell(self, state: int) -> tuple[int, int]:
        if self.grid_shape is None:
            raise ValueError("MDP has no grid layout")
        width = self.grid_shape[0]
        return state % width, state // width

    def state(self, x: int, y: int) -> int:
        if self.grid_shape is None:
            raise ValueError("MDP has no grid layout")
        return y * self.grid_shape[0] + x


def check_stochastic(transition: np.ndarray) -> None:
    if np.any(transition < 0):
        raise MdpValidationError("transition table has negative entries")
    sums = transition.sum(axis=-1)
    worst = np.max(np.abs(sums - 1.0))
    if worst > _STOCHASTIC_TOL:
        raise MdpValidationError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")


@dataclass(frozen=True)
class GridworldSpec:
    width: int = 5
    height: int = 5
    reward_cells: tuple[tuple[tuple[int, int], float], ...] = (
        ((0, 0), 1.0),
        ((4, 0), 1.0),
        ((0, 4), 1.0),
        ((4, 4), 1.0),
    )
    teleport_on_reward: bool = True
    discount: float = 0.99

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise MdpValidationError("grid dimensions must be positive")
        seen = set()
        for (x, y), value in self.reward_cells:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise MdpValidationError(f"reward cell {(x, y)} lies outside the {self.width}x{self.height} grid")
            if (x, y) in seen:
                raise MdpValidationError(f"reward cell {(x, y)} listed twice")
            if not np.isfinite(value):
                raise MdpValidationError(f"reward at {(x, y)} is not finite")
            seen.add((x, y))

    @classmethod
    def four_corners(cls, size: int = 5, reward: float = 1.0, **kwargs) -> "GridworldSpec":
        last = size - 1
        cells = tuple(((x, y), reward) for (x, y) in ((0, 0), (last, 0), (0, last), (last, last)))
        return cls(width=size, height=size, reward_cells=cells, **kwargs)


def build_gridworld(spec: GridworldSpec, start_distribution=None) -> TabularMdp:
    """Build the tabular MDP for a clamp-at-boundary gridworld.

    States are numbered row-major, ``state = y * width + x`` with ``y = 0`` the
    top row.  A rewarding cell pays its reward while occupied; with teleporting
    enabled every action taken from it lands on a uniformly random cell.  The
    task is continuing: nothing is terminal.
    """
    spec.validate()
    n = spec.width * spec.height
    transition = np.zeros((n, 4, n))
    reward = np.zeros(n)
    for (x, y), value in spec.reward_cells:
        reward[y * spec.width + x] = value
    for y in range(spec.height):
        for x in range(spec.width):
            s = y * spec.width + x
            if spec.teleport_on_reward and reward[s] != 0.0:
                transition[s, :, :] = 1.0 / n
                continue
            for a, (dx, dy) in _MOVES.items():
                nx = min(max(x + dx, 0), spec.width - 1)
                ny = min(max(y + dy, 0), spec.height - 1)
                transition[s, a, ny * spec.width + nx] = 1.0
    if start_distribution is None:
        start_distribution = np.full(n, 1.0 / n)
    return TabularMdp(transition, reward, spec.discount, start_distribution,
                      grid_shape=(spec.width, spec.height))


@dataclass
class Trajectory:
    start: int
    steps: list[tuple[int, int, float, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> np.ndarray:
        """Visited states s_0 .. s_{T-1} (the state each step was taken from)."""
        return np.array([step[0] for step in self.steps], dtype=int)


def policy_matrix(policy, n_states: int, n_actions: int) -> np.ndarray:
    """Coerce a policy into an (S, A) matrix of action probabilities.

    Accepts anything with an ``action`` attribute, a length-S vector of action
    indices, or an (S, A) stochastic matrix.
    """
    policy = getattr(policy, "action", policy)
    arr = np.asarray(policy)
    if arr.ndim == 1:
        if arr.shape != (n_states,):
            raise ValueError(f"deterministic policy needs {n_states} entries, got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("deterministic policy must hold integer action indices")
        if np.any(arr < 0) or np.any(arr >= n_actions):
            raise ValueError("policy action index out of range")
        out = np.zeros((n_states, n_actions))
        out[np.arange(n_states), arr] = 1.0
        return out
    if arr.shape != (n_states, n_actions):
        raise ValueError(f"stochastic policy must have shape {(n_states, n_actions)}, got {arr.shape}")
    arr = arr.astype(float)
    if np.any(arr < 0) or np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("stochastic policy rows must be probability vectors")
    return arr


def _sample_rows(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cum: (..., S) cumulative probabilities; u: matching leading shape
    idx = (u[..., None] >= cum).sum(axis=-1)
    return np.minimum(idx, cum.shape[-1] - 1)


def simulate_trajectory(mdp: TabularMdp, policy, start: int, cutoff: int,
                        rng: np.random.Generator) -> Trajectory:
    """Roll out ``cutoff`` steps from an arbitrary ``start`` state.

    Each step records ``(s, a, R(s'), s')``.  Two uniform draws per step are
    taken from ``rng`` (action, then next state), so equal seeds give identical
    trajectories.
    """
    if not 0 <= start < mdp.n_states:
        raise IndexError(f"start state {start} out of range")
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    pi_cum = np.cumsum(policy_matrix(policy, mdp.n_states, mdp.n_actions), axis=1)
    t_cum = np.cumsum(mdp.transition, axis=2)
    draws = rng.random((cutoff, 2))
    traj = Trajectory(start=start)
    s = start
    for u_a, u_s in draws:
        a = min(int(np.searchsorted(pi_cum[s], u_a, side="right")), mdp.n_actions - 1)
        s2 = min(int(np.searchsorted(t_cum[s, a], u_s, side="right")), mdp.n_states - 1)
        traj.steps.append((s, a, float(mdp.reward[s2]), s2))
        s = s2
    return traj


def rollout_states(mdp: TabularMdp, actions: np.ndarray, starts: np.ndarray, horizon: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Vectorised rollouts of deterministic policies.

    ``actions`` has shape (..., S): one deterministic policy per leading index;
    ``starts`` has the same leading shape plus a trailing batch axis.  Returns
    states of shape ``starts.shape + (horizon,)``; column 0 is the start.
    """
    actions = np.asarray(actions)
    starts = np.asarray(starts)
    lead = actions.shape[:-1]
    t_cum = np.cumsum(mdp.transition, axis=2)
    out = np.empty(starts.shape + (horizon,), dtype=int)
    s = starts.copy()
    policy_idx = np.indices(starts.shape)[: len(lead)]
    for t in range(horizon):
        out[..., t] = s
        if t == horizon - 1:
            break
        a = actions[tuple(policy_idx) + (s,)]
        s = _sample_rows(t_cum[s, a], rng.random(s.shape))
    return out


def restrict_rewards(mdp: TabularMdp, region: Callable[[int], bool] | Sequence[bool] | np.ndarray) -> TabularMdp:
    """Zero the reward outside ``region``; dynamics, discount and start are kept.

    ``region`` is either a predicate on state indices or a boolean mask.
    """
    if callable(region):
        mask = np.array([bool(region(s)) for s in range(mdp.n_states)], dtype=bool)
    else:
        mask = np.asarray(region, dtype=bool)
        if mask.shape != (mdp.n_states,):
            raise ValueError("region mask must have one entry per state")
    return mdp.with_reward(np.where(mask, mdp.reward, 0.0))


def left_half(mdp: TabularMdp) -> np.ndarray:
    """Boolean mask of the cells with ``x < width / 2``."""
    width, height = mdp.grid_shape
    xs = np.arange(mdp.n_states) % width
    return xs < width / 2
