"""Exact dynamic-programming oracles on dense tables.

Q-tables follow the next-state reward convention used by the learners::

    Q(s, a) = sum_s2 T(s2 | s, a) * (R(s2) + gamma * max_b Q(s2, b))

so the state value that includes the reward of the current state is
``U(s) = R(s) + gamma * Q(s, pi(s))``.  Both conventions give the same greedy
policies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, check_stochastic, policy_matrix

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    action: np.ndarray

    def __post_init__(self):
        action = np.array(self.action, dtype=int)
        action.setflags(write=False)
        object.__setattr__(self, "action", action)

    def __eq__(self, other):
        return isinstance(other, DeterministicPolicy) and np.array_equal(self.action, other.action)

    def __hash__(self):
        return hash(self.action.tobytes())


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    psi: np.ndarray  # psi[s, s2]: discounted expected visits to s2 from s
    normalized: np.ndarray  # rows of psi rescaled to probability vectors


def greedy(q: np.ndarray) -> np.ndarray:
    """Greedy actions per row; near-ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=-1, keepdims=True)
    tol = TIE_TOL * np.abs(q).max(axis=-1, keepdims=True)
    return np.argmax(q >= best - tol, axis=-1)


def transition_under(mdp: TabularMdp, policy) -> np.ndarray:
    pi = policy_matrix(policy, mdp.n_states, mdp.n_actions)
    return np.einsum("sa,sat->st", pi, mdp.transition)


def _discount(mdp: TabularMdp, discount) -> float:
    gamma = mdp.discount if discount is None else float(discount)
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    return gamma


def policy_evaluation(mdp: TabularMdp, reward, policy, discount=None) -> np.ndarray:
    """Solve (I - gamma P_pi) U = r for the state values of ``policy``.

    ``reward`` may be a vector (S,) or a stack (k, S); the result matches.
    """
    gamma = _discount(mdp, discount)
    reward = np.asarray(reward, dtype=float)
    p_pi = transition_under(mdp, policy)
    system = np.eye(mdp.n_states) - gamma * p_pi
    try:
        values = np.linalg.solve(system, reward.T).T
    except np.linalg.LinAlgError as exc:  # pragma: no cover - impossible for gamma < 1
        raise RuntimeError("policy evaluation system is singular") from exc
    residual = np.max(np.abs(system @ values.T - reward.T)) if reward.size else 0.0
    if residual > 1e-10 * max(1.0, np.max(np.abs(reward), initial=0.0) / (1.0 - gamma)):
        raise RuntimeError(f"policy evaluation residual {residual:.3e} too large")
    return values


def bellman_residual(mdp: TabularMdp, reward, q: np.ndarray, discount=None) -> float:
    gamma = _discount(mdp, discount)
    target = mdp.transition @ (np.asarray(reward, float) + gamma * q.max(axis=1))
    return float(np.max(np.abs(q - target)))


def value_iteration(mdp: TabularMdp, reward=None, discount=None, tol: float = 1e-10,
                    max_iter: int = 10_000) -> tuple[np.ndarray, DeterministicPolicy]:
    """Optimal Q-table and greedy policy for ``reward`` (defaults to the MDP's).

    Runs policy iteration with exact linear solves, then polishes with Bellman
    backups until the sup-norm residual is at most ``tol``.  The returned
    policy breaks ties by lowest action index.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = _discount(mdp, discount)
    check_stochastic(mdp.transition)
    reward = mdp.reward if reward is None else np.asarray(reward, dtype=float)

    action = np.zeros(mdp.n_states, dtype=int)
    rows = np.arange(mdp.n_states)
    for _ in range(max_iter):
        values = policy_evaluation(mdp, reward, action, gamma)
        q = mdp.transition @ values
        best = q.max(axis=1)
        # switch only on strict improvement so policy iteration cannot cycle on ties
        keep = q[rows, action] >= best - TIE_TOL * np.abs(q).max(axis=1)
        new_action = np.where(keep, action, greedy(q))
        if np.array_equal(new_action, action):
            break
        action = new_action
    else:  # pragma: no cover
        raise RuntimeError("policy iteration did not converge")

    for _ in range(max_iter):
        if bellman_residual(mdp, reward, q, gamma) <= tol:
            break
        q = mdp.transition @ (reward + gamma * q.max(axis=1))
    else:  # pragma: no cover
        raise RuntimeError("value iteration did not reach tolerance")
    return q, DeterministicPolicy(greedy(q))


def state_values(q: np.ndarray, reward, discount: float, policy=None) -> np.ndarray:
    """U(s) = R(s) + gamma * Q(s, pi(s)); greedy in Q when ``policy`` is None."""
    q = np.asarray(q, dtype=float)
    if policy is None:
        follow = q.max(axis=-1)
    else:
        action = np.asarray(getattr(policy, "action", policy))
        follow = np.take_along_axis(q, action[..., None], axis=-1)[..., 0]
    return np.asarray(reward, dtype=float) + discount * follow


def occupancy(mdp: TabularMdp, policy, discount=None, horizon: int | None = None) -> OccupancyTable:
    """Discounted visitation table of ``policy``.

    With ``horizon`` set, only the first ``horizon`` time steps (t = 0 .. T-1)
    are counted; this is the oracle for truncated rollout estimators.
    """
    gamma = _discount(mdp, discount)
    p_pi = transition_under(mdp, policy)
    n = mdp.n_states
    if horizon is None:
        psi = np.linalg.solve(np.eye(n) - gamma * p_pi, np.eye(n))
        # unreachable entries come out as round-off of either sign
        psi = np.maximum(psi, 0.0)
        mass = 1.0 / (1.0 - gamma)
    else:
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        psi = np.zeros((n, n))
        step = np.eye(n)
        for t in range(horizon):
            psi += (gamma ** t) * step
            step = step @ p_pi
        mass = float(sum(gamma ** t for t in range(horizon)))
    return OccupancyTable(psi=psi, normalized=psi / mass)
